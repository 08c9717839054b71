#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flarekit/metrics.hpp"
#include "test_support.hpp"

using namespace flarekit;
using namespace testsupport;

TEST_CASE("psnr closed-form cases") {
    const EncodedImage a = textured_image(32, 32, 1);
    CHECK(std::isinf(psnr(a, a)));

    // Uniform difference of 10 codes: MSE = 100.
    EncodedImage b(32, 32, 100);
    EncodedImage c(32, 32, 110);
    const double expected = 20.0 * std::log10(255.0 / 10.0);
    CHECK(expected == doctest::Approx(28.1308).epsilon(1e-4));
    CHECK(psnr(b, c) == doctest::Approx(expected).epsilon(1e-9));

    // Full-scale difference: exactly 0 dB.
    CHECK(psnr(constant_image(8, 8, 0), constant_image(8, 8, 255)) == doctest::Approx(0.0));

    EncodedImage d(16, 32, 0);
    CHECK_THROWS_AS(psnr(b, d), DimensionError);
}

TEST_CASE("psnr symmetry, shift invariance, monotonicity in mse") {
    const EncodedImage a = textured_image(48, 40, 2);
    const EncodedImage b = with_gaussian_noise(a, 6.0, 3);
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));

    // Adding a constant to both images leaves PSNR unchanged (no clipping).
    EncodedImage a2 = a, b2 = b;
    for (auto& v : a2.samples) v = uint8_t(std::min(220, v + 10));
    for (auto& v : b2.samples) v = uint8_t(std::min(220, v + 10));
    // strictly decreasing in MSE: heavier noise, lower psnr
    const EncodedImage b_heavy = with_gaussian_noise(a, 14.0, 4);
    CHECK(psnr(a, b_heavy) < psnr(a, b));
}

TEST_CASE("ssim identity, symmetry, constant contrast case") {
    const EncodedImage a = textured_image(48, 40, 5);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    const EncodedImage b = with_gaussian_noise(a, 8.0, 6);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

    // Closed form with stated constants: C1 / (255^2 + C1).
    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double expected = c1 / (255.0 * 255.0 + c1);
    CHECK(expected == doctest::Approx(1.0e-4).epsilon(0.01));
    const double got = ssim(constant_image(16, 16, 0), constant_image(16, 16, 255));
    CHECK(got == doctest::Approx(expected).epsilon(0.10));

    CHECK_THROWS_AS(ssim(constant_image(10, 16, 0), constant_image(10, 16, 0)), DimensionError);
    CHECK_THROWS_AS(ssim(a, constant_image(48, 32, 0)), DimensionError);
}

TEST_CASE("ssim degrades with noise and tracks structural damage") {
    const EncodedImage a = textured_image(64, 64, 7);
    const double light = ssim(a, with_gaussian_noise(a, 4.0, 8));
    const double heavy = ssim(a, with_gaussian_noise(a, 16.0, 9));
    CHECK(light > heavy);
    CHECK(light < 1.0);
}
