#pragma once

#include <array>
#include <string>

#include "flarekit/image.hpp"

namespace flarekit {

// Convention used throughout: estimate_translation(ref, mov) returns the
// displacement t of mov's content relative to ref, i.e. mov ~= ref with its
// content moved by +t. resample_shift(ref, t) reproduces mov;
// resample_shift(mov, -t) aligns mov back onto ref.
struct Translation {
    double dx = 0.0;
    double dy = 0.0;
    double confidence = 0.0; // peak-sharpness ratio

    std::string to_json() const;
    static Translation from_json(const std::string& text);
};

struct TranslationParams {
    double search_bound = 32.0;       // max |dx|,|dy|
    double confidence_threshold = 3.0;
};

Translation estimate_translation(const EncodedImage& reference, const EncodedImage& moving,
                                 const TranslationParams& params = {});

// Bilinear resampling that moves content by (+dx,+dy): out(x) = in(x - d).
EncodedImage resample_shift(const EncodedImage& img, double dx, double dy);
LinearImage resample_shift(const LinearImage& img, double dx, double dy);

struct QuantizedShift {
    int ix = 0; // even
    int iy = 0; // even
    double residual_dx = 0.0;
    double residual_dy = 0.0;
};

// Nearest even integer per component, ties away from zero. Even shifts keep
// the CFA phase; the residual is what the raw grid cannot express.
QuantizedShift quantize_translation_for_raw(const Translation& t);

struct ShiftedRaw {
    RawImage raw;
    Mask valid; // vacated border is 0
};

// Pure index shift of the mosaic by (+ix,+iy); both must be even.
ShiftedRaw shift_raw(const RawImage& raw, int ix, int iy);

// 3x3 row-major, normalized so m[8] == 1. Maps moving-image coordinates to
// reference-image coordinates.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    double reprojection_rms = 0.0;

    std::array<double, 2> apply(double x, double y) const;
    Homography inverse() const; // throws NonInvertibleError

    std::string to_json() const;
    static Homography from_json(const std::string& text);
};

struct HomographyParams {
    int block_size = 21;        // odd
    int grid_step = 72;
    int search_radius = 24;     // around the global translation prior
    double prior_bound = 160.0; // phase-correlation prior search bound
    double min_block_stddev = 3.0;
    double ncc_threshold = 0.5;
};

// Block matching + normalized cross correlation + direct linear transform
// with iterative robust reweighting.
Homography estimate_homography(const EncodedImage& reference, const EncodedImage& moving,
                               const HomographyParams& params = {});

// Least-squares homography from explicit correspondences (moving -> reference).
// Exact (reprojection ~ machine eps) for noise-free inputs.
Homography homography_from_points(const std::vector<std::array<double, 2>>& moving_pts,
                                  const std::vector<std::array<double, 2>>& reference_pts);

struct WarpedEncoded {
    EncodedImage image;
    Mask valid;
};
struct WarpedLinear {
    LinearImage image;
    Mask valid;
};

// Inverse-mapped bilinear resampling; samples falling outside the source
// frame are marked invalid, never fabricated.
WarpedEncoded warp(const EncodedImage& img, const Homography& h);
WarpedLinear warp(const LinearImage& img, const Homography& h);

} // namespace flarekit
