#include "flarekit/flare_removal.hpp"

#include <algorithm>
#include <cmath>

#include "flarekit/filters.hpp"
#include "flarekit/isp.hpp"
#include "flarekit/util.hpp"

namespace flarekit {

namespace {

// Shared tail: render the flare-free linear estimate into the tone domain and
// derive the flare image as the code-value difference. The sRGB transfer is
// monotone, so the difference is non-negative and the subtractive invariant
// holds bit-exactly.
RemovalResult finish_from_clean_linear(const EncodedImage& input, const LinearImage& clean_lin) {
    RemovalResult r;
    r.clean_estimate = tone_map(clean_lin);
    r.flare_estimate = EncodedImage(input.width, input.height);
    for (size_t i = 0; i < input.samples.size(); ++i) {
        const int d = int(input.samples[i]) - int(r.clean_estimate.samples[i]);
        r.flare_estimate.samples[i] = uint8_t(d > 0 ? d : 0);
        if (d < 0) // keep the invariant even if rounding nudged a code up
            r.clean_estimate.samples[i] = input.samples[i];
    }
    return r;
}

} // namespace

RemovalResult IdentityRemover::remove(const EncodedImage& img) const {
    RemovalResult r;
    r.clean_estimate = img;
    r.flare_estimate = EncodedImage(img.width, img.height, 0);
    return r;
}

RemovalResult OracleRemover::remove(const EncodedImage& img) const {
    if (truth.width != img.width || truth.height != img.height)
        throw DimensionError("oracle remover: truth layer dimensions differ from input");
    LinearImage lin = linearize(img);
    for (size_t i = 0; i < lin.samples.size(); ++i) {
        // A clipped observation is only a lower bound; subtracting from it
        // would punch holes into saturated sources, so those stay clipped.
        if (img.samples[i] == 255) continue;
        const float v = lin.samples[i] - truth.samples[i];
        lin.samples[i] = v > 0.f ? v : 0.f;
    }
    return finish_from_clean_linear(img, lin);
}

RemovalResult BaselineRemover::remove(const EncodedImage& img) const {
    const auto sources = detect_light_sources(img, params.detect);
    if (sources.empty()) return IdentityRemover{}.remove(img); // nothing to fit

    const int w = img.width, h = img.height;
    const size_t n = size_t(w) * h;
    const LinearImage lin = linearize(img);

    // Source cores are kept out of the glare fit; subtraction of a smooth
    // field cannot un-clip them anyway.
    const Mask detected = detection_mask(img, params.detect);
    const Mask core = dilate_disk(detected, params.source_exclusion_radius);
    // Glare lives around sources; anything further out is scene texture.
    const int halo_radius = int(std::lround(5.0f * params.glare_kernel_sigma));
    const Mask halo = dilate_disk(detected, halo_radius);

    LinearImage clean = lin;
    std::vector<float> plane(n), opened(n), masked(n), weight(n), num(n), den(n), field(n);
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < n; ++i) plane[i] = lin.samples[i * 3 + size_t(c)];

        // Global veiling: any lift of the darkest percentile beyond the
        // black-floor allowance is attributed to flare.
        const float veil =
            std::max(0.f, percentile(plane, 2.0) - params.veil_floor);

        // Local excess over the morphological background.
        opening_square(plane.data(), opened.data(), w, h, params.opening_radius);
        for (size_t i = 0; i < n; ++i)
            masked[i] = std::max(plane[i] - opened[i], 0.f);

        // Split thin oriented structure (streaks) from blob-like glare: a
        // structure that survives opening along every direction is a blob.
        std::vector<float> iso(n, 0.f), tmp(n);
        {
            const int dirs[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
            bool first = true;
            for (const auto& d : dirs) {
                opening_line(masked.data(), tmp.data(), w, h, 7, d[0], d[1]);
                for (size_t i = 0; i < n; ++i)
                    iso[i] = first ? tmp[i] : std::min(iso[i], tmp[i]);
                first = false;
            }
        }

        // Evidence gate: scene texture leaks through the opening everywhere
        // at a similar level, real glare stands out near the sources. Keep
        // the fit only when the near-source excess dominates.
        std::vector<float> inside, outside;
        for (size_t i = 0; i < n; ++i) {
            if (core.values[i]) continue;
            (halo.values[i] ? inside : outside).push_back(iso[i]);
        }
        float pedestal = 0.f;
        bool keep_field = false;
        if (!inside.empty()) {
            const float in_p90 = percentile(inside, 90.0);
            pedestal = outside.empty() ? 0.f : percentile(outside, 90.0);
            keep_field = in_p90 >= 0.01f && in_p90 >= 2.5f * std::max(pedestal, 1e-4f);
        }

        if (!keep_field) {
            std::fill(field.begin(), field.end(), 0.f);
        } else {
            for (size_t i = 0; i < n; ++i) {
                const bool keep = !core.values[i] && halo.values[i];
                weight[i] = keep ? 1.f : 0.f;
                masked[i] = keep ? std::max(iso[i] - pedestal, 0.f) : 0.f;
            }
            // Normalized convolution fills the excluded source hole smoothly.
            gaussian_blur_plane(masked.data(), num.data(), w, h, params.glare_kernel_sigma);
            gaussian_blur_plane(weight.data(), den.data(), w, h, params.glare_kernel_sigma);
            for (size_t i = 0; i < n; ++i)
                field[i] = den[i] > 0.05f ? num[i] / den[i] : 0.f;
        }

        std::vector<float> streak(n, 0.f);
        if (params.streak_suppression) {
            // Streak component at full resolution, lightly median-smoothed.
            for (size_t i = 0; i < n; ++i) {
                const float excess = std::max(plane[i] - opened[i], 0.f);
                tmp[i] = core.values[i] ? 0.f : std::max(excess - iso[i], 0.f);
            }
            median3x3_plane(tmp.data(), streak.data(), w, h);
            if (percentile(streak, 99.0) < 0.008f) std::fill(streak.begin(), streak.end(), 0.f);
        }

        for (size_t i = 0; i < n; ++i) {
            const float flare = std::min(veil + field[i] + streak[i], plane[i]);
            clean.samples[i * 3 + size_t(c)] = plane[i] - flare;
        }
    }
    return finish_from_clean_linear(img, clean);
}

std::string remover_kind_name(RemoverKind k) {
    switch (k) {
        case RemoverKind::Identity: return "identity";
        case RemoverKind::Oracle: return "oracle";
        case RemoverKind::Baseline: return "baseline";
    }
    return "identity";
}

RemoverKind remover_kind_from_name(const std::string& name) {
    if (name == "identity") return RemoverKind::Identity;
    if (name == "oracle") return RemoverKind::Oracle;
    if (name == "baseline") return RemoverKind::Baseline;
    throw ParseError("unknown remover kind: " + name);
}

} // namespace flarekit
