#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flarekit/flare_removal.hpp"
#include "flarekit/flare_sim.hpp"
#include "flarekit/isp.hpp"
#include "flarekit/metrics.hpp"
#include "flarekit/util.hpp"
#include "test_support.hpp"

using namespace flarekit;
using namespace testsupport;

namespace {

// Clean scene with a light source and a near-black floor, as the baseline's
// veiling estimator assumes.
LinearImage clean_scene(uint64_t seed, int size = 256) {
    SceneSpec spec;
    spec.width = size;
    spec.height = size;
    spec.seed = seed;
    spec.background_low = 0.004f;
    spec.background_high = 0.28f;
    spec.sources.push_back({size * 0.3f, size * 0.4f, 14.f, 2.5f});
    return synth_scene(spec);
}

void check_subtractive_invariant(const EncodedImage& input, const RemovalResult& r) {
    REQUIRE(r.clean_estimate.samples.size() == input.samples.size());
    for (size_t i = 0; i < input.samples.size(); ++i) {
        CHECK(int(r.clean_estimate.samples[i]) ==
              std::max(0, int(input.samples[i]) - int(r.flare_estimate.samples[i])));
    }
}

} // namespace

TEST_CASE("identity remover") {
    const EncodedImage img = textured_image(64, 48, 81);
    const IdentityRemover remover;
    const RemovalResult r = remover.remove(img);
    CHECK(r.clean_estimate.samples == img.samples);
    for (uint8_t v : r.flare_estimate.samples) CHECK(v == 0);
    CHECK(std::isinf(psnr(r.clean_estimate, img)));
    check_subtractive_invariant(img, r);

    // Idempotence.
    const RemovalResult twice = remover.remove(r.clean_estimate);
    CHECK(twice.clean_estimate.samples == img.samples);
}

TEST_CASE("oracle remover with a zero truth layer is the identity") {
    const EncodedImage img = textured_image(64, 48, 82);
    const OracleRemover remover(LinearImage(64, 48, 0.f));
    const RemovalResult r = remover.remove(img);
    CHECK(r.clean_estimate.samples == img.samples);
    for (uint8_t v : r.flare_estimate.samples) CHECK(v == 0);
}

TEST_CASE("oracle remover closure on synthetic scattering pairs") {
    const LinearImage clean = clean_scene(83);
    FlareSpec spec;
    spec.kind = FlareKind::Scattering;
    spec.scattering.glare_sigma = 10.f;
    spec.scattering.glare_gain = 0.25f;
    spec.scattering.veiling = 0.06f;
    const FlarePair pair = apply_scattering_flare(clean, spec);

    const EncodedImage corrupted = tone_map(pair.corrupted);
    const EncodedImage truth_clean = tone_map(pair.clean);

    const OracleRemover remover(pair.flare_layer);
    const RemovalResult r = remover.remove(corrupted);
    check_subtractive_invariant(corrupted, r);
    for (uint8_t v : r.flare_estimate.samples) CHECK(v >= 0);
    CHECK(psnr(r.clean_estimate, truth_clean) >= 45.0);

    CHECK_THROWS_AS(remover.remove(textured_image(32, 32, 1)), DimensionError);
}

TEST_CASE("oracle residual error concentrates in saturated regions") {
    // Flare strong enough to clip the ceiling over the source.
    LinearImage clean = clean_scene(84);
    FlareSpec spec;
    spec.kind = FlareKind::Scattering;
    spec.scattering.glare_sigma = 6.f;
    spec.scattering.glare_gain = 3.5f;
    spec.scattering.veiling = 0.f;
    const FlarePair pair = apply_scattering_flare(clean, spec);

    const EncodedImage corrupted = tone_map(pair.corrupted);
    const EncodedImage truth_clean = tone_map(pair.clean);
    const OracleRemover remover(pair.flare_layer);
    const RemovalResult r = remover.remove(corrupted);

    double err_sat = 0, err_unsat = 0;
    size_t n_sat = 0, n_unsat = 0;
    for (int y = 0; y < clean.height; ++y)
        for (int x = 0; x < clean.width; ++x) {
            const bool saturated = pair.corrupted.at(x, y, 1) >= 1.0f;
            for (int c = 0; c < 3; ++c) {
                const double d = std::abs(double(r.clean_estimate.at(x, y, c)) -
                                          double(truth_clean.at(x, y, c)));
                if (saturated) {
                    err_sat += d;
                    ++n_sat;
                } else {
                    err_unsat += d;
                    ++n_unsat;
                }
            }
        }
    REQUIRE(n_sat > 0);
    REQUIRE(n_unsat > 0);
    CHECK(err_sat / double(n_sat) > err_unsat / double(n_unsat));
    CHECK(err_unsat / double(n_unsat) <= 1.0); // near-exact away from clipping
}

TEST_CASE("baseline remover leaves flare-free scenes alone") {
    const LinearImage clean = clean_scene(85);
    // Precondition of the veiling estimator: the scene has a near-black floor.
    std::vector<float> greens;
    for (int y = 0; y < clean.height; ++y)
        for (int x = 0; x < clean.width; ++x) greens.push_back(clean.at(x, y, 1));
    REQUIRE(percentile(greens, 2.0) < 0.01f);

    const EncodedImage img = tone_map(clean);
    const BaselineRemover remover;
    const RemovalResult r = remover.remove(img);
    check_subtractive_invariant(img, r);
    uint8_t peak = 0;
    for (uint8_t v : r.flare_estimate.samples) peak = std::max(peak, v);
    CHECK(int(peak) <= 2);
}

TEST_CASE("baseline remover is the identity when no sources are detected") {
    SceneSpec spec;
    spec.width = 128;
    spec.height = 128;
    spec.seed = 86;
    const EncodedImage img = tone_map(synth_scene(spec)); // no sources
    const BaselineRemover remover;
    const RemovalResult r = remover.remove(img);
    CHECK(r.clean_estimate.samples == img.samples);
    for (uint8_t v : r.flare_estimate.samples) CHECK(v == 0);
}

TEST_CASE("baseline remover improves veiling-glare pairs by at least 1 dB") {
    const LinearImage clean = clean_scene(87);
    FlareSpec spec;
    spec.kind = FlareKind::Scattering;
    spec.scattering.glare_sigma = 12.f;
    spec.scattering.glare_gain = 0.2f;
    spec.scattering.veiling = 0.08f;
    const FlarePair pair = apply_scattering_flare(clean, spec);

    const EncodedImage corrupted = tone_map(pair.corrupted);
    const EncodedImage truth_clean = tone_map(pair.clean);
    const BaselineRemover remover;
    const RemovalResult r = remover.remove(corrupted);
    check_subtractive_invariant(corrupted, r);

    const double before = psnr(corrupted, truth_clean);
    const double after = psnr(r.clean_estimate, truth_clean);
    CHECK(after - before >= 1.0);
}

TEST_CASE("remover ordering: oracle >= baseline >= identity on flare-bearing pairs") {
    const LinearImage clean = clean_scene(88);
    FlareSpec spec;
    spec.kind = FlareKind::Scattering;
    spec.scattering.glare_sigma = 10.f;
    spec.scattering.glare_gain = 0.3f;
    spec.scattering.veiling = 0.05f;
    const FlarePair pair = apply_scattering_flare(clean, spec);
    const EncodedImage corrupted = tone_map(pair.corrupted);
    const EncodedImage truth_clean = tone_map(pair.clean);

    const double p_oracle = psnr(OracleRemover(pair.flare_layer).remove(corrupted).clean_estimate,
                                 truth_clean);
    const double p_base = psnr(BaselineRemover().remove(corrupted).clean_estimate, truth_clean);
    const double p_id = psnr(IdentityRemover().remove(corrupted).clean_estimate, truth_clean);
    CHECK(p_oracle > p_base);
    CHECK(p_base > p_id);
}

TEST_CASE("streak suppression removes oriented structure") {
    // Streak-dominated corruption so the option's effect is isolated.
    const LinearImage clean = clean_scene(89);
    FlareSpec spec;
    spec.kind = FlareKind::Scattering;
    spec.scattering.glare_gain = 0.f;
    spec.scattering.streaks = {2, 0.7f, 90.f, 0.3f};
    spec.scattering.veiling = 0.01f;
    const FlarePair pair = apply_scattering_flare(clean, spec);
    const EncodedImage corrupted = tone_map(pair.corrupted);
    const EncodedImage truth_clean = tone_map(pair.clean);

    BaselineParams with;
    with.streak_suppression = true;
    BaselineParams without;
    without.streak_suppression = false;
    const double p_with = psnr(BaselineRemover(with).remove(corrupted).clean_estimate, truth_clean);
    const double p_without =
        psnr(BaselineRemover(without).remove(corrupted).clean_estimate, truth_clean);
    CHECK(p_with > p_without);
}

TEST_CASE("remover kind names round trip") {
    for (RemoverKind k : {RemoverKind::Identity, RemoverKind::Oracle, RemoverKind::Baseline})
        CHECK(remover_kind_from_name(remover_kind_name(k)) == k);
    CHECK_THROWS_AS(remover_kind_from_name("neural"), ParseError);
}
