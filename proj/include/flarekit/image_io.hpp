#pragma once

#include <string>

#include "flarekit/image.hpp"

namespace flarekit {

// PNG, 8-bit RGB.
void save_png(const std::string& path, const EncodedImage& img);
EncodedImage load_png(const std::string& path);

// JPEG file (lossy stage output).
void save_jpeg(const std::string& path, const EncodedImage& img, int quality);
EncodedImage load_jpeg(const std::string& path);

// Loads either by extension (.png / .jpg / .jpeg).
EncodedImage load_encoded(const std::string& path);

// PFM, 3-channel float, little-endian (scale -1), bottom-up rows.
void save_pfm(const std::string& path, const LinearImage& img);
LinearImage load_pfm(const std::string& path);

// Raw persistence: 16-bit big-endian PGM (P5) holding the mosaic counts plus
// a JSON sidecar (same path with ".json" appended) for the metadata.
void save_raw(const std::string& pgm_path, const RawImage& raw);
RawImage load_raw(const std::string& pgm_path);

std::string raw_sidecar_path(const std::string& pgm_path);

} // namespace flarekit
