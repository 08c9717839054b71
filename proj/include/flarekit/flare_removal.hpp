#pragma once

#include <memory>
#include <string>

#include "flarekit/dataset.hpp"
#include "flarekit/image.hpp"

namespace flarekit {

// Every remover predicts an additive flare image and subtracts it:
// clean_estimate == saturating(input - flare_estimate), bit-exact.
struct RemovalResult {
    EncodedImage clean_estimate;
    EncodedImage flare_estimate;
};

struct FlareRemover {
    virtual ~FlareRemover() = default;
    virtual RemovalResult remove(const EncodedImage& img) const = 0;
    virtual std::string name() const = 0;
};

// Control arm: flare_estimate = 0.
struct IdentityRemover final : FlareRemover {
    RemovalResult remove(const EncodedImage& img) const override;
    std::string name() const override { return "identity"; }
};

// Upper bound: subtracts the known ground-truth flare layer (linear light),
// rendered into the tone domain. Isolates pipeline-stage effects from
// remover quality.
struct OracleRemover final : FlareRemover {
    explicit OracleRemover(LinearImage truth_flare_layer)
        : truth(std::move(truth_flare_layer)) {}

    RemovalResult remove(const EncodedImage& img) const override; // throws DimensionError
    std::string name() const override { return "oracle"; }

    LinearImage truth;
};

struct BaselineParams {
    int source_exclusion_radius = 8;   // px, keeps the source core out of the fit
    float glare_kernel_sigma = 18.0f;  // px, glare-field smoothing
    bool streak_suppression = false;
    int opening_radius = 31;           // background structuring radius
    float veil_floor = 0.01f;          // linear black-level allowance
    DetectParams detect;
};

// Classical estimator: detect sources, take the over-background excess
// (grayscale opening as background), fit a smooth glare field around the
// sources, estimate global veiling from the dark percentile, subtract.
// No light-source blending: with no detected sources it is the identity.
struct BaselineRemover final : FlareRemover {
    explicit BaselineRemover(BaselineParams p = {}) : params(p) {}

    RemovalResult remove(const EncodedImage& img) const override;
    std::string name() const override { return "baseline"; }

    BaselineParams params;
};

enum class RemoverKind { Identity, Oracle, Baseline };
std::string remover_kind_name(RemoverKind k);
RemoverKind remover_kind_from_name(const std::string& name);

} // namespace flarekit
