#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flarekit/image.hpp"

namespace flarekit {

struct FlareRemover; // flare_removal.hpp

// ---- fixed linear front-end -------------------------------------------------

RawMosaic black_level_correct(const RawImage& raw);
RawMosaic white_balance(const RawMosaic& mosaic, const std::array<float, 3>& gains);
LinearImage demosaic_bilinear(const RawMosaic& mosaic);
LinearImage color_correct(const LinearImage& img, const std::array<float, 9>& matrix);

// sRGB opto-electronic transfer, 8-bit round-to-nearest quantization.
EncodedImage tone_map(const LinearImage& img);
LinearImage linearize(const EncodedImage& img);

float srgb_encode(float linear);   // clamped to [0,1] first
float srgb_decode(float encoded);  // encoded in [0,1]

// ---- reorderable back-end stages (8-bit encoded domain) ---------------------

// Bilateral filter, spatial sigma = 2*strength px, range sigma = 25*strength
// codes. strength 0 is a bit-identical identity.
EncodedImage denoise(const EncodedImage& img, float strength);

// out = clamp(img + amount*(img - gaussian_blur(img, radius))). The radius
// parameter is the Gaussian sigma in pixels.
EncodedImage sharpen_usm(const EncodedImage& img, float amount, float radius);

// Baseline JPEG (4:2:0) encode at the given quality factor, then decode.
EncodedImage jpeg_roundtrip(const EncodedImage& img, int quality);

// ---- pipeline configuration -------------------------------------------------

enum class Stage { Denoise, FlareRemoval, Sharpen, Compression };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct PipelineConfig {
    std::vector<Stage> backend_order;
    float denoise_strength = 1.0f;
    float sharpen_amount = 1.0f;  // [0,3]
    float sharpen_radius = 2.0f;  // > 0
    int jpeg_quality = 60;        // [1,100]
    std::optional<int> config_id; // 1..4 when built from a preset

    bool has_stage(Stage s) const;
    void validate() const; // throws ConfigError

    std::string to_json() const;
    static PipelineConfig from_json(const std::string& text);
};

// The four processing orders of the ordering study:
//   1: denoise, flare_removal, sharpen, compression
//   2: denoise, sharpen, flare_removal, compression
//   3: denoise, sharpen, compression, flare_removal
//   4: sharpen, compression, flare_removal
PipelineConfig pipeline_config_preset(int id);

// ---- pipeline runner ---------------------------------------------------------

struct StageRecord {
    std::string name;
    std::string params; // compact JSON
    std::string output_digest;
};

struct StageTrace {
    std::vector<StageRecord> stages;

    std::string to_json() const;
};

struct PipelineResult {
    EncodedImage image;
    StageTrace trace;
};

// Fixed front-end then the configured back-end stages in order. `remover`
// is required iff the config contains the flare_removal stage.
PipelineResult run_pipeline(const RawImage& raw, const PipelineConfig& config,
                            const FlareRemover* remover = nullptr);

} // namespace flarekit
