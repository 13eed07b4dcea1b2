#pragma once

#include "mast/autograd.hpp"
#include "mast/ops_elementwise.hpp"
#include "mast/ops_linalg.hpp"
#include "mast/ops_nn.hpp"
#include "mast/ops_shape.hpp"
#include "mast/tensor.hpp"
