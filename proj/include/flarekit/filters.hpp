#pragma once

#include <vector>

#include "flarekit/image.hpp"

namespace flarekit {

// Single-channel float plane helpers. All borders are reflect-101 unless
// noted. Planes are row-major w*h buffers.

std::vector<float> gaussian_kernel(float sigma); // normalized, radius ceil(3*sigma)

void gaussian_blur_plane(const float* src, float* dst, int w, int h, float sigma);

// Grayscale erosion/dilation with a (2r+1)^2 square structuring element,
// separable running min/max.
void erode_square(const float* src, float* dst, int w, int h, int radius);
void dilate_square(const float* src, float* dst, int w, int h, int radius);
void opening_square(const float* src, float* dst, int w, int h, int radius);

// Grayscale opening with a 1D line SE along (dx,dy) in {(1,0),(0,1),(1,1),(1,-1)}.
void opening_line(const float* src, float* dst, int w, int h, int half_len, int dx, int dy);

void median3x3_plane(const float* src, float* dst, int w, int h);

// Binary morphology with a disk structuring element.
Mask erode_disk(const Mask& m, int radius);
Mask dilate_disk(const Mask& m, int radius);
Mask open_disk(const Mask& m, int radius);
Mask close_disk(const Mask& m, int radius);

// Chessboard-metric distance (in dilation steps) from the mask, capped at
// max_steps; 0 inside the mask.
std::vector<int> mask_distance(const Mask& m, int max_steps);

} // namespace flarekit
