#pragma once

#include <string>
#include <vector>

#include "mast/tensor.hpp"

namespace mast::data {

/// One video: frames are 3 x H x W in [0, 1], masks 1 x H x W in {0, 1}.
struct VideoClip {
  std::string id;
  std::vector<Tensor> frames;
  std::vector<Tensor> masks;
  double fps = 25.0;

  std::size_t size() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().dim(1); }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().dim(2); }

  void validate() const {
    if (frames.size() != masks.size()) {
      throw DataError("clip " + id + ": " + std::to_string(frames.size()) + " frames but " + std::to_string(masks.size()) + " masks");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].rank() != 3 || frames[i].dim(0) != 3 || frames[i].shape() != frames.front().shape()) {
        throw DataError("clip " + id + ": frame " + std::to_string(i) + " has shape " + shape_str(frames[i].shape()));
      }
      if (masks[i].shape() != Shape{1, frames[i].dim(1), frames[i].dim(2)}) {
        throw DataError("clip " + id + ": mask " + std::to_string(i) + " has shape " + shape_str(masks[i].shape()));
      }
      for (double v : masks[i].data()) {
        if (v != 0.0 && v != 1.0) throw DataError("clip " + id + ": mask " + std::to_string(i) + " is not binary");
      }
    }
  }
};

}  // namespace mast::data
