#pragma once

#include "flarekit/image.hpp"

namespace flarekit {

// 10*log10(255^2 / MSE) over all channels; +inf when the images are equal.
double psnr(const EncodedImage& a, const EncodedImage& b); // throws DimensionError

// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, C1=(0.01*255)^2,
// C2=(0.03*255)^2, averaged over channels and valid window positions.
double ssim(const EncodedImage& a, const EncodedImage& b); // throws DimensionError

} // namespace flarekit
