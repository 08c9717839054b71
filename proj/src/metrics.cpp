#include "flarekit/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "flarekit/errors.hpp"

namespace flarekit {

double psnr(const EncodedImage& a, const EncodedImage& b) {
    if (!a.same_size(b)) throw DimensionError("psnr: image dimensions differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.samples.size(); ++i) {
        const double d = double(a.samples[i]) - double(b.samples[i]);
        sum += d * d;
    }
    const double mse = sum / double(a.samples.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

// 1D half of the 11x11 sigma-1.5 window; the 2D window is the outer product.
const std::array<double, 11>& ssim_kernel() {
    static const std::array<double, 11> k = [] {
        std::array<double, 11> v{};
        double sum = 0.0;
        for (int i = -5; i <= 5; ++i) {
            v[size_t(i + 5)] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
            sum += v[size_t(i + 5)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return k;
}

// Separable valid-region convolution: rows first (valid in x), then columns.
void blur_valid(const std::vector<double>& src, std::vector<double>& tmp,
                std::vector<double>& dst, int w, int h) {
    const auto& k = ssim_kernel();
    const int vw = w - 10;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            const double* row = src.data() + size_t(y) * w + x;
            for (int i = 0; i < 11; ++i) acc += k[size_t(i)] * row[i];
            tmp[size_t(y) * vw + x] = acc;
        }
    }
    const int vh = h - 10;
    for (int y = 0; y < vh; ++y) {
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int i = 0; i < 11; ++i) acc += k[size_t(i)] * tmp[size_t(y + i) * vw + x];
            dst[size_t(y) * vw + x] = acc;
        }
    }
}

} // namespace

double ssim(const EncodedImage& a, const EncodedImage& b) {
    if (!a.same_size(b)) throw DimensionError("ssim: image dimensions differ");
    if (a.width < 11 || a.height < 11)
        throw DimensionError("ssim: images smaller than the 11x11 window");

    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const int w = a.width, h = a.height;
    const int vw = w - 10, vh = h - 10;
    const size_t n = size_t(w) * h;
    const size_t vn = size_t(vw) * vh;

    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    std::vector<double> tmp(size_t(vw) * h);
    std::vector<double> mu_a(vn), mu_b(vn), maa(vn), mbb(vn), mab(vn);

    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double va = a.at(x, y, c);
                const double vb = b.at(x, y, c);
                const size_t i = size_t(y) * w + x;
                pa[i] = va;
                pb[i] = vb;
                paa[i] = va * va;
                pbb[i] = vb * vb;
                pab[i] = va * vb;
            }
        }
        blur_valid(pa, tmp, mu_a, w, h);
        blur_valid(pb, tmp, mu_b, w, h);
        blur_valid(paa, tmp, maa, w, h);
        blur_valid(pbb, tmp, mbb, w, h);
        blur_valid(pab, tmp, mab, w, h);

        double channel_sum = 0.0;
        for (size_t i = 0; i < vn; ++i) {
            const double var_a = maa[i] - mu_a[i] * mu_a[i];
            const double var_b = mbb[i] - mu_b[i] * mu_b[i];
            const double cov = mab[i] - mu_a[i] * mu_b[i];
            channel_sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
        }
        total += channel_sum / double(vn);
    }
    return total / 3.0;
}

} // namespace flarekit
