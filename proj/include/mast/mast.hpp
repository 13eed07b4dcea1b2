#pragma once

#include "mast/tensor.hpp"
#include "mast/autograd.hpp"
#include "mast/ops.hpp"
#include "mast/optim.hpp"
#include "mast/serialize.hpp"
#include "mast/random.hpp"
#include "mast/layers.hpp"
#include "mast/encoder.hpp"
#include "mast/mixture_attention.hpp"
#include "mast/decoder.hpp"
#include "mast/loss.hpp"
#include "mast/model.hpp"
#include "mast/metrics.hpp"
#include "mast/data/clip.hpp"
#include "mast/data/synthetic.hpp"
#include "mast/data/sampler.hpp"
