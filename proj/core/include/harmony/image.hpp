#pragma once

#include <torch/torch.h>

#include <string>

namespace harmony {

// Loads an image as float32 CHW, RGB, values in [0,1]. Throws DataError on
// missing or undecodable files.
torch::Tensor load_image(const std::string& path);

// Loads a mask as float32 1xHxW with values in {0,1}. Pixels >= threshold
// (on the 0..255 scale) map to 1.
torch::Tensor load_mask(const std::string& path, int threshold = 128);

// Writes a CHW float tensor in [0,1] (clamped) as an 8-bit image. Format
// follows the file extension.
void save_image(const std::string& path, const torch::Tensor& chw);

// Writes a 1xHxW {0,1} mask as an 8-bit grayscale PNG with values 0/255.
void save_mask(const std::string& path, const torch::Tensor& mask);

// Bicubic resize for image content, nearest for masks. Both take and return
// CHW float tensors.
torch::Tensor resize_bicubic(const torch::Tensor& chw, int64_t height, int64_t width);
torch::Tensor resize_nearest(const torch::Tensor& chw, int64_t height, int64_t width);

// [0,1] <-> [-1,1]
inline torch::Tensor to_signed(const torch::Tensor& unit) { return unit * 2.0 - 1.0; }
inline torch::Tensor to_unit(const torch::Tensor& sgn) { return (sgn + 1.0) * 0.5; }

// Fraction of mask pixels that are foreground (mask is 1xHxW in {0,1}).
double foreground_ratio(const torch::Tensor& mask);

}  // namespace harmony
