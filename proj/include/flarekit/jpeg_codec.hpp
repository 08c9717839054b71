#pragma once

#include <cstdint>
#include <vector>

#include "flarekit/image.hpp"

namespace flarekit {

// Baseline JPEG with 4:2:0 chroma subsampling.
std::vector<uint8_t> jpeg_encode(const EncodedImage& img, int quality);
EncodedImage jpeg_decode(const std::vector<uint8_t>& bytes);

} // namespace flarekit
