// 8-bit RGB PNG input/output for frame tensors. Frames are [3,H,W] in the
// unit range [0,1]; writing quantizes with round(v*255).
#pragma once

#include <string>

#include "vsr/tensor.hpp"

namespace vsr {

void write_png(const std::string& path, const TensorF& chw);
TensorF read_png(const std::string& path);  // -> [3,H,W] in [0,1]

}  // namespace vsr
