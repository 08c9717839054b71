#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flarekit/image.hpp"
#include "flarekit/registration.hpp"

namespace flarekit {

struct LightSource {
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // bbox, inclusive
    int area = 0;                       // px^2
    double saturation_fraction = 0.0;   // fraction of pixels at full code
};

struct DetectParams {
    float lum_threshold = 0.95f * 255.0f;
    int min_area = 25;     // px^2
    int morph_radius = 2;  // px
};

// Threshold luminance, drop background-mask pixels, morphological open then
// close, connected components >= min_area. Sorted by area descending.
std::vector<LightSource> detect_light_sources(const EncodedImage& img,
                                              const DetectParams& params = {},
                                              const Mask* background_mask = nullptr);

// The refined binary detection mask (same procedure, before component split).
Mask detection_mask(const EncodedImage& img, const DetectParams& params = {},
                    const Mask* background_mask = nullptr);

struct CropWindow {
    int x0 = 0; // even
    int y0 = 0; // even
    int size = 0;
};

// One window per source, centered on its centroid, clamped to the frame,
// origin floored to even so raw crops keep their CFA phase.
std::vector<CropWindow> crop_windows(const std::vector<LightSource>& sources, int patch_size,
                                     int image_width, int image_height);

EncodedImage crop(const EncodedImage& img, const CropWindow& w);
LinearImage crop(const LinearImage& img, const CropWindow& w);
Mask crop(const Mask& m, const CropWindow& w);
RawImage crop(const RawImage& raw, const CropWindow& w);

struct QualityMetrics {
    double residual_shift_px = 0.0;
    double exposure_ratio = 1.0;
    double flare_coverage = 0.0; // [0,1]
};

struct FilterThresholds {
    double max_residual_px = 0.3;
    double exposure_ratio_lo = 0.95;
    double exposure_ratio_hi = 1.05;
    double coverage_lo = 0.001;
    double coverage_hi = 0.6;
};

struct FilterDecision {
    bool accepted = true;
    std::string reject_reason; // first violated metric
};

FilterDecision quality_filter(const QualityMetrics& q, const FilterThresholds& t = {});

enum class SceneTag { Indoor, OutdoorDay, OutdoorNight };
std::string scene_tag_name(SceneTag t);
SceneTag scene_tag_from_name(const std::string& name);

struct PairPaths {
    std::string raw_corrupted;
    std::string raw_clean;
    std::string rgb_corrupted;
    std::string rgb_clean;
    std::string flare_layer; // optional, empty when absent
};

struct PairRecord {
    std::string pair_id;
    std::string flare_kind; // "scattering" | "reflective"
    SceneTag scene_tag = SceneTag::Indoor;
    std::string device_tag;
    int patch_size = 512;
    PairPaths paths;
    std::variant<Translation, Homography> registration;
    QualityMetrics quality;
    bool accepted = true;
    std::string reject_reason;

    std::string to_json() const;
    static PairRecord from_json(const std::string& text);
};

struct ManifestStats {
    // rows: indoor, outdoor_day, outdoor_night; cols: scattering, reflective
    int counts[3][2] = {{0, 0}, {0, 0}, {0, 0}};
    int total_scattering = 0;
    int total_reflective = 0;
};

struct DatasetManifest {
    std::vector<PairRecord> records;

    ManifestStats stats() const;
};

// JSON lines, one record per line, footer stats object. Records are written
// sorted by pair_id so output bytes are stable.
void manifest_write(const std::string& path, const DatasetManifest& manifest);
DatasetManifest manifest_read(const std::string& path); // throws ParseError with line context

std::string render_stats(const ManifestStats& stats);

// ---- reflective pair building -------------------------------------------------

struct ReflectiveBuildParams {
    float diff_threshold = 8.0f;      // codes, after 3x3 median of |A - warp(B)|
    int feather_px = 8;
    double max_mask_fraction = 0.40;  // above this the capture is rejected
    double symmetric_margin = 24.0;   // allowed-region dilation around mirrored sources
    DetectParams detect;
    HomographyParams homography;
};

// One direction of the subtract-and-merge procedure: flare found in `target`,
// ground truth assembled from the warped partner.
struct ReflectiveProduct {
    EncodedImage ground_truth; // target with masked region replaced, feathered
    Mask flare_mask;
    Homography h;              // partner -> target coordinates
    QualityMetrics quality;
    bool rejected = false;
    std::string reject_reason;
};

// Both directions of a rotation pair. Raw images are never warped; callers
// store the original raws alongside these RGB products.
std::array<ReflectiveProduct, 2> build_reflective_pairs(const EncodedImage& img_a,
                                                        const EncodedImage& img_b,
                                                        const ReflectiveBuildParams& params = {});

// Optical center used for the symmetric-region restriction (frame center).
std::array<double, 2> optical_center(int width, int height);

} // namespace flarekit
