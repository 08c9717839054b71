#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flarekit/image.hpp"

namespace flarekit {

// Linear values saturate here; above this the sensor is taken as fully
// clipped, so the additive flare decomposition stops being observable.
inline constexpr float kLinearCeiling = 8.0f;

struct SceneSource {
    float cx = 0.f;
    float cy = 0.f;
    float radius = 0.f;     // px, > 0
    float intensity = 1.f;  // linear, >= 1 (saturating)
};

struct SceneSpec {
    int width = 512;
    int height = 512;
    float background_low = 0.005f;  // procedural field spans [low, high]
    float background_high = 0.45f;
    float background_gamma = 2.0f;  // tone shape of the field; lower = brighter
    float detail = 0.0f;            // weight of a fine (3-6 px) texture octave
    std::vector<SceneSource> sources;
    uint64_t seed = 0;

    std::string to_json() const;
    static SceneSpec from_json(const std::string& text);
};

enum class FlareKind { Scattering, Reflective };

std::string flare_kind_name(FlareKind k);
FlareKind flare_kind_from_name(const std::string& name);

struct StreakSpec {
    int count = 0;
    float angle = 0.f;   // rad, base orientation
    float length = 0.f;  // px
    float gain = 0.f;
};

struct ScatteringSpec {
    float glare_sigma = 12.f;
    float glare_gain = 0.f;
    StreakSpec streaks;
    float veiling = 0.f; // constant linear offset
};

struct ReflectiveSpec {
    float center_x = 0.f; // optical center, px
    float center_y = 0.f;
    float ghost_gain = 0.f;     // [0,1]
    float defocus_radius = 0.f; // px, 0 = in-focus
};

struct FlareSpec {
    FlareKind kind = FlareKind::Scattering;
    ScatteringSpec scattering;
    ReflectiveSpec reflective;
    uint64_t seed = 0;

    std::string to_json() const;
    static FlareSpec from_json(const std::string& text);
};

struct FlarePair {
    LinearImage clean;
    LinearImage corrupted;   // clamp(clean + flare_layer) at kLinearCeiling
    LinearImage flare_layer; // additive, >= 0
    FlareSpec spec;
};

// Deterministic procedural scene: low-frequency background below
// background_high plus additive saturating source disks.
LinearImage synth_scene(const SceneSpec& spec);

// Glare/streak convolution of the over-unity source excess plus a constant
// veiling offset, composed additively in linear light.
FlarePair apply_scattering_flare(const LinearImage& clean, const FlareSpec& spec);

// One ghost per saturated source, point-mirrored about the optical center,
// then spread by a disk kernel of defocus_radius.
FlarePair apply_reflective_flare(const LinearImage& clean, const FlareSpec& spec);

struct RawMetadata {
    Cfa cfa = Cfa::RGGB;
    int bit_depth = 12;
    std::array<int, 4> black_level{64, 64, 64, 64};
    int white_level = 4095;
    std::array<float, 3> wb_gains{2.0f, 1.0f, 1.6f};
    std::array<float, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

// Inverse front-end: inverse color matrix, inverse gains, CFA sampling,
// re-quantization to counts. Values above 1 clip at white_level.
RawImage remosaic(const LinearImage& img, const RawMetadata& meta);

// Additive Gaussian read noise, sigma as a fraction of (white-black).
// Deterministic under seed. Models one capture; corrupted and clean frames
// of a pair get independent seeds.
RawImage add_sensor_noise(const RawImage& raw, float sigma_fraction, uint64_t seed);

} // namespace flarekit
