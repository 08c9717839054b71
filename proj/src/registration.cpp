#include "flarekit/registration.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <json.hpp>
#include <vector>

#include "flarekit/filters.hpp"
#include "flarekit/util.hpp"

using nlohmann::json;

namespace flarekit {

std::string Translation::to_json() const {
    json j;
    j["type"] = "translation";
    j["dx"] = dx;
    j["dy"] = dy;
    j["confidence"] = std::isfinite(confidence) ? confidence : 0.0;
    return j.dump();
}

Translation Translation::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        Translation t;
        t.dx = j.at("dx").get<double>();
        t.dy = j.at("dy").get<double>();
        if (j.contains("confidence") && j.at("confidence").is_number())
            t.confidence = j.at("confidence").get<double>();
        return t;
    } catch (const json::exception& e) {
        throw ParseError(std::string("translation: ") + e.what());
    }
}

namespace {

using cd = std::complex<double>;

// Iterative radix-2 FFT; n must be a power of two.
void fft_line(cd* data, int n, int stride, bool inverse) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[size_t(i) * stride], data[size_t(j) * stride]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / len;
        const cd wlen(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                cd& u = data[size_t(i + k) * stride];
                cd& v = data[size_t(i + k + len / 2) * stride];
                const cd t = v * w;
                v = u - t;
                u = u + t;
                w *= wlen;
            }
        }
    }
}

void fft2d(std::vector<cd>& data, int n, bool inverse) {
    for (int y = 0; y < n; ++y) fft_line(data.data() + size_t(y) * n, n, 1, inverse);
    for (int x = 0; x < n; ++x) fft_line(data.data() + x, n, n, inverse);
    if (inverse) {
        const double scale = 1.0 / (double(n) * n);
        for (auto& v : data) v *= scale;
    }
}

std::vector<double> luma_plane(const EncodedImage& img) {
    std::vector<double> out(size_t(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out[size_t(y) * img.width + x] =
                luma601(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
    return out;
}

int signed_shift(int index, int n) { return index <= n / 2 ? index : index - n; }

// Upsampled inverse DFT of the cross-power spectrum evaluated on a local
// grid: half-span +/-1 px around (cx, cy) at 1/zoom px steps.
void upsampled_peak(const std::vector<cd>& spectrum, int n, double cx, double cy, int zoom,
                    double& out_x, double& out_y) {
    const int half = zoom; // +/- 1 px
    const int grid = 2 * half + 1;

    std::vector<cd> ey(size_t(grid) * n), ex(size_t(n) * grid);
    for (int gy = 0; gy < grid; ++gy) {
        const double v = cy + double(gy - half) / double(zoom);
        for (int k = 0; k < n; ++k) {
            const double f = signed_shift(k, n) == k ? k : k - n; // signed frequency
            const double ang = 2.0 * 3.14159265358979323846 * f * v / double(n);
            ey[size_t(gy) * n + k] = cd(std::cos(ang), std::sin(ang));
        }
    }
    for (int k = 0; k < n; ++k) {
        const double f = signed_shift(k, n) == k ? k : k - n;
        for (int gx = 0; gx < grid; ++gx) {
            const double u = cx + double(gx - half) / double(zoom);
            const double ang = 2.0 * 3.14159265358979323846 * f * u / double(n);
            ex[size_t(k) * grid + gx] = cd(std::cos(ang), std::sin(ang));
        }
    }

    // partial = ey * spectrum  (grid x n), then result = partial * ex (grid x grid)
    std::vector<cd> partial(size_t(grid) * n);
    for (int gy = 0; gy < grid; ++gy) {
        for (int kx = 0; kx < n; ++kx) {
            cd acc(0.0, 0.0);
            for (int ky = 0; ky < n; ++ky)
                acc += ey[size_t(gy) * n + ky] * spectrum[size_t(ky) * n + kx];
            partial[size_t(gy) * n + kx] = acc;
        }
    }
    std::vector<double> surface(size_t(grid) * grid);
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            cd acc(0.0, 0.0);
            for (int kx = 0; kx < n; ++kx)
                acc += partial[size_t(gy) * n + kx] * ex[size_t(kx) * grid + gx];
            surface[size_t(gy) * grid + gx] = acc.real();
        }
    }

    int best = 0;
    for (int i = 1; i < grid * grid; ++i)
        if (surface[size_t(i)] > surface[size_t(best)]) best = i;
    int bx = best % grid, by = best / grid;

    // Parabolic refinement on the fine grid.
    auto parabola = [&](double l, double c, double r) {
        const double denom = l - 2.0 * c + r;
        if (std::abs(denom) < 1e-12) return 0.0;
        double d = 0.5 * (l - r) / denom;
        return clampf(float(d), -0.5f, 0.5f) * 1.0;
    };
    double fx = 0.0, fy = 0.0;
    if (bx > 0 && bx < grid - 1)
        fx = parabola(surface[size_t(by) * grid + bx - 1], surface[size_t(by) * grid + bx],
                      surface[size_t(by) * grid + bx + 1]);
    if (by > 0 && by < grid - 1)
        fy = parabola(surface[size_t(by - 1) * grid + bx], surface[size_t(by) * grid + bx],
                      surface[size_t(by + 1) * grid + bx]);

    out_x = cx + (double(bx - half) + fx) / double(zoom);
    out_y = cy + (double(by - half) + fy) / double(zoom);
}

} // namespace

namespace {

struct CorrelationResult {
    double dx = 0.0;
    double dy = 0.0;
    double confidence = 0.0;
    // Runner-up lag: mirror-symmetric flare can raise a competing peak, and
    // the caller disambiguates by verifying both alignments.
    int second_ix = 0;
    int second_iy = 0;
};

// Phase correlation of two n x n windows taken at (ax,ay) in `a` and (bx,by)
// in `b`, both Hann-windowed and mean-subtracted.
CorrelationResult correlate_windows(const std::vector<double>& a, const std::vector<double>& b,
                                    int stride, int ax, int ay, int bx, int by, int n,
                                    int bound) {
    std::vector<cd> fa(size_t(n) * n), fb(size_t(n) * n);
    std::vector<double> hann(size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
        hann[size_t(i)] = 0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * i / (n - 1)));

    double mean_a = 0.0, mean_b = 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            mean_a += a[size_t(ay + y) * stride + size_t(ax + x)];
            mean_b += b[size_t(by + y) * stride + size_t(bx + x)];
        }
    mean_a /= double(n) * n;
    mean_b /= double(n) * n;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double wnd = hann[size_t(y)] * hann[size_t(x)];
            fa[size_t(y) * n + x] =
                cd((a[size_t(ay + y) * stride + size_t(ax + x)] - mean_a) * wnd, 0.0);
            fb[size_t(y) * n + x] =
                cd((b[size_t(by + y) * stride + size_t(bx + x)] - mean_b) * wnd, 0.0);
        }
    }

    fft2d(fa, n, false);
    fft2d(fb, n, false);

    // Regularized cross-power: phase-normalized where the signal is strong,
    // attenuated where only noise lives. High frequencies carry mostly
    // interpolation and quantization noise, so they are rolled off.
    std::vector<cd> spectrum(size_t(n) * n);
    double mean_mag = 0.0;
    for (size_t i = 0; i < spectrum.size(); ++i) mean_mag += std::abs(fa[i]) * std::abs(fb[i]);
    mean_mag /= double(spectrum.size());
    const double mag_floor = 0.05 * mean_mag;
    const double f_cut = double(n) / 2.0;
    for (int ky = 0; ky < n; ++ky) {
        const double fy = signed_shift(ky, n);
        for (int kx = 0; kx < n; ++kx) {
            const double fx = signed_shift(kx, n);
            const size_t i = size_t(ky) * n + kx;
            const cd v = std::conj(fa[i]) * fb[i];
            const double mag = std::abs(v);
            const double r = std::sqrt(fx * fx + fy * fy) / f_cut;
            const double rolloff = r >= 1.0 ? 0.0 : 0.5 * (1.0 + std::cos(3.14159265358979 * r));
            spectrum[i] = v / (mag + mag_floor) * rolloff;
        }
    }

    std::vector<cd> corr = spectrum;
    fft2d(corr, n, true);

    double peak = -1e30;
    int px = 0, py = 0;
    for (int iy = 0; iy < n; ++iy) {
        const int sy = signed_shift(iy, n);
        if (std::abs(sy) > bound) continue;
        for (int ix = 0; ix < n; ++ix) {
            const int sx = signed_shift(ix, n);
            if (std::abs(sx) > bound) continue;
            const double v = corr[size_t(iy) * n + ix].real();
            if (v > peak) {
                peak = v;
                px = ix;
                py = iy;
            }
        }
    }

    // Peak-sharpness ratio against the best value clear of the peak's own
    // skirt (the spectral rolloff widens it), within the search region.
    const int excl = std::min(12, bound / 2);
    double second = 1e-12;
    int spx = px, spy = py;
    for (int iy = 0; iy < n; ++iy) {
        const int sy = signed_shift(iy, n);
        if (std::abs(sy) > bound) continue;
        int dy = std::abs(iy - py);
        dy = std::min(dy, n - dy);
        for (int ix = 0; ix < n; ++ix) {
            const int sx = signed_shift(ix, n);
            if (std::abs(sx) > bound) continue;
            int dx = std::abs(ix - px);
            dx = std::min(dx, n - dx);
            if (dx <= excl && dy <= excl) continue;
            const double v = corr[size_t(iy) * n + ix].real();
            if (v > second) {
                second = v;
                spx = ix;
                spy = iy;
            }
        }
    }

    CorrelationResult out;
    out.confidence = peak / std::max(second, 1e-12);
    out.second_ix = signed_shift(spx, n);
    out.second_iy = signed_shift(spy, n);
    upsampled_peak(spectrum, n, double(signed_shift(px, n)), double(signed_shift(py, n)), 16,
                   out.dx, out.dy);
    return out;
}

// Correlation odds rho/(1-rho) of the integer-aligned windows. Verifies the
// estimate for content too smooth to sharpen the correlation peak: a genuine
// alignment correlates strongly; a spurious one does not.
double aligned_correlation_odds(const std::vector<double>& a, const std::vector<double>& b,
                                int stride, int x0, int y0, int ix, int iy, int n) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    const double cnt = double(n) * n;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double va = a[size_t(y0 + y) * stride + size_t(x0 + x)];
            const double vb = b[size_t(y0 + iy + y) * stride + size_t(x0 + ix + x)];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    const double var_a = saa - sa * sa / cnt;
    const double var_b = sbb - sb * sb / cnt;
    if (var_a < 1e-9 || var_b < 1e-9) return 0.0;
    const double rho = std::max(0.0, (sab - sa * sb / cnt) / std::sqrt(var_a * var_b));
    return rho / std::max(1.0 - rho, 1e-9);
}

} // namespace

Translation estimate_translation(const EncodedImage& reference, const EncodedImage& moving,
                                 const TranslationParams& params) {
    if (!reference.same_size(moving))
        throw DimensionError("estimate_translation: image dimensions differ");
    const int w = reference.width, h = reference.height;

    int n = 1;
    while (n * 2 <= std::min(w, h) && n < 512) n *= 2;
    // Leave slack so the second pass can slide the moving window.
    if (n >= 64 && (std::min(w, h) - n) / 2 < 16) n /= 2;
    if (n < 32) throw DimensionError("estimate_translation: images too small");

    const int x0 = (w - n) / 2;
    const int y0 = (h - n) / 2;

    const auto la = luma_plane(reference);
    const auto lb = luma_plane(moving);

    const int bound = std::min(int(params.search_bound), n / 2 - 2);
    const CorrelationResult coarse = correlate_windows(la, lb, w, x0, y0, x0, y0, n, bound);

    // Verify the top two lags photometrically and keep the better one: a
    // bright ghost mirrored about the optical center raises a competing peak
    // at the opposite lag, which a whole-window alignment check exposes.
    int ix = std::clamp(int(std::lround(coarse.dx)), -x0, w - n - x0);
    int iy = std::clamp(int(std::lround(coarse.dy)), -y0, h - n - y0);
    double odds = aligned_correlation_odds(la, lb, w, x0, y0, ix, iy, n);
    {
        const int jx = std::clamp(coarse.second_ix, -x0, w - n - x0);
        const int jy = std::clamp(coarse.second_iy, -y0, h - n - y0);
        const double alt_odds = aligned_correlation_odds(la, lb, w, x0, y0, jx, jy, n);
        if (alt_odds > odds * 1.25) {
            ix = jx;
            iy = jy;
            odds = alt_odds;
        }
    }

    // The aligned windows also verify the match for low-bandwidth content
    // whose correlation peak is broad rather than sharp.
    const double confidence = std::max(coarse.confidence, odds);
    if (!(confidence >= params.confidence_threshold))
        throw LowConfidenceError("translation peak ratio " + std::to_string(confidence) +
                                 " below threshold " + std::to_string(params.confidence_threshold));

    const CorrelationResult fine =
        correlate_windows(la, lb, w, x0, y0, x0 + ix, y0 + iy, n, std::min(bound, 8));

    Translation t;
    t.dx = std::clamp(double(ix) + fine.dx, -params.search_bound, params.search_bound);
    t.dy = std::clamp(double(iy) + fine.dy, -params.search_bound, params.search_bound);
    t.confidence = confidence;
    return t;
}

namespace {

template <typename Img, typename Fetch, typename Store>
void resample_shift_impl(const Img& img, double dx, double dy, Img& out, Fetch fetch, Store store) {
    const int w = img.width, h = img.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = double(x) - dx;
            const double sy = double(y) - dy;
            const int ix = int(std::floor(sx)), iy = int(std::floor(sy));
            const double fx = sx - ix, fy = sy - iy;
            for (int c = 0; c < 3; ++c) {
                const double v00 = fetch(reflect101(ix, w), reflect101(iy, h), c);
                const double v10 = fetch(reflect101(ix + 1, w), reflect101(iy, h), c);
                const double v01 = fetch(reflect101(ix, w), reflect101(iy + 1, h), c);
                const double v11 = fetch(reflect101(ix + 1, w), reflect101(iy + 1, h), c);
                const double v = (v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                                 (v01 * (1 - fx) + v11 * fx) * fy;
                store(out, x, y, c, v);
            }
        }
    }
}

} // namespace

EncodedImage resample_shift(const EncodedImage& img, double dx, double dy) {
    EncodedImage out(img.width, img.height);
    resample_shift_impl(
        img, dx, dy, out, [&](int x, int y, int c) { return double(img.at(x, y, c)); },
        [](EncodedImage& o, int x, int y, int c, double v) {
            o.at(x, y, c) = uint8_t(std::lround(clampf(float(v), 0.f, 255.f)));
        });
    return out;
}

LinearImage resample_shift(const LinearImage& img, double dx, double dy) {
    LinearImage out(img.width, img.height);
    resample_shift_impl(
        img, dx, dy, out, [&](int x, int y, int c) { return double(img.at(x, y, c)); },
        [](LinearImage& o, int x, int y, int c, double v) { o.at(x, y, c) = float(v); });
    return out;
}

QuantizedShift quantize_translation_for_raw(const Translation& t) {
    QuantizedShift q;
    // Nearest even integer, ties away from zero: lround rounds half away.
    q.ix = 2 * int(std::lround(t.dx / 2.0));
    q.iy = 2 * int(std::lround(t.dy / 2.0));
    q.residual_dx = t.dx - double(q.ix);
    q.residual_dy = t.dy - double(q.iy);
    return q;
}

ShiftedRaw shift_raw(const RawImage& raw, int ix, int iy) {
    if (ix % 2 != 0 || iy % 2 != 0)
        throw CfaPhaseError("raw shifts must be even to preserve the CFA phase");
    ShiftedRaw out;
    out.raw = raw;
    out.valid = Mask(raw.width, raw.height, 0);
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
            const int sx = x - ix, sy = y - iy;
            if (sx >= 0 && sx < raw.width && sy >= 0 && sy < raw.height) {
                out.raw.at(x, y) = raw.at(sx, sy);
                out.valid.at(x, y) = 1;
            } else {
                // Vacated border: neutral black, flagged invalid.
                out.raw.at(x, y) =
                    uint16_t(raw.black_level[size_t(cfa_cell_index(x, y))]);
            }
        }
    }
    return out;
}

std::array<double, 2> Homography::apply(double x, double y) const {
    const double d = m[6] * x + m[7] * y + m[8];
    return {(m[0] * x + m[1] * y + m[2]) / d, (m[3] * x + m[4] * y + m[5]) / d};
}

Homography Homography::inverse() const {
    const auto& a = m;
    const double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                       a[2] * (a[3] * a[7] - a[4] * a[6]);
    if (std::abs(det) < 1e-12) throw NonInvertibleError("homography is not invertible");
    const double id = 1.0 / det;
    Homography out;
    out.m = {(a[4] * a[8] - a[5] * a[7]) * id, (a[2] * a[7] - a[1] * a[8]) * id,
             (a[1] * a[5] - a[2] * a[4]) * id, (a[5] * a[6] - a[3] * a[8]) * id,
             (a[0] * a[8] - a[2] * a[6]) * id, (a[2] * a[3] - a[0] * a[5]) * id,
             (a[3] * a[7] - a[4] * a[6]) * id, (a[1] * a[6] - a[0] * a[7]) * id,
             (a[0] * a[4] - a[1] * a[3]) * id};
    if (std::abs(out.m[8]) > 1e-15) {
        const double s = 1.0 / out.m[8];
        for (auto& v : out.m) v *= s;
    }
    return out;
}

std::string Homography::to_json() const {
    json j;
    j["type"] = "homography";
    j["matrix"] = m;
    j["reprojection_rms"] = reprojection_rms;
    return j.dump();
}

Homography Homography::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        Homography h;
        h.m = j.at("matrix").get<std::array<double, 9>>();
        h.reprojection_rms = j.value("reprojection_rms", 0.0);
        return h;
    } catch (const json::exception& e) {
        throw ParseError(std::string("homography: ") + e.what());
    }
}

namespace {

// Gaussian elimination with partial pivoting; a is n x n row-major.
bool solve_linear(std::vector<double>& a, std::vector<double>& b, int n) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[size_t(r) * n + col]) > std::abs(a[size_t(pivot) * n + col])) pivot = r;
        if (std::abs(a[size_t(pivot) * n + col]) < 1e-12) return false;
        if (pivot != col) {
            for (int c = 0; c < n; ++c) std::swap(a[size_t(pivot) * n + c], a[size_t(col) * n + c]);
            std::swap(b[size_t(pivot)], b[size_t(col)]);
        }
        const double inv = 1.0 / a[size_t(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[size_t(r) * n + col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[size_t(r) * n + c] -= f * a[size_t(col) * n + c];
            b[size_t(r)] -= f * b[size_t(col)];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[size_t(r)];
        for (int c = r + 1; c < n; ++c) acc -= a[size_t(r) * n + c] * b[size_t(c)];
        b[size_t(r)] = acc / a[size_t(r) * n + r];
    }
    return true;
}

struct Similarity {
    double scale = 1.0, tx = 0.0, ty = 0.0;
    std::array<double, 2> apply(double x, double y) const {
        return {scale * (x - tx), scale * (y - ty)};
    }
};

Similarity normalizer(const std::vector<std::array<double, 2>>& pts) {
    Similarity s;
    double cx = 0, cy = 0;
    for (const auto& p : pts) {
        cx += p[0];
        cy += p[1];
    }
    cx /= double(pts.size());
    cy /= double(pts.size());
    double mean_dist = 0;
    for (const auto& p : pts) mean_dist += std::hypot(p[0] - cx, p[1] - cy);
    mean_dist /= double(pts.size());
    s.tx = cx;
    s.ty = cy;
    s.scale = mean_dist > 1e-9 ? std::sqrt(2.0) / mean_dist : 1.0;
    return s;
}

Homography solve_dlt_weighted(const std::vector<std::array<double, 2>>& mov,
                              const std::vector<std::array<double, 2>>& ref,
                              const std::vector<double>& weights) {
    const size_t n = mov.size();
    const Similarity nm = normalizer(mov);
    const Similarity nr = normalizer(ref);

    // Normal equations for the 8 unknowns (h8 fixed at 1).
    std::vector<double> ata(64, 0.0), atb(8, 0.0);
    auto accumulate = [&](const double* row, double rhs, double w) {
        for (int i = 0; i < 8; ++i) {
            for (int j = i; j < 8; ++j) ata[size_t(i) * 8 + j] += w * row[i] * row[j];
            atb[size_t(i)] += w * row[i] * rhs;
        }
    };
    for (size_t i = 0; i < n; ++i) {
        const auto [x, y] = nm.apply(mov[i][0], mov[i][1]);
        const auto [u, v] = nr.apply(ref[i][0], ref[i][1]);
        const double w = weights.empty() ? 1.0 : weights[i];
        const double row1[8] = {x, y, 1, 0, 0, 0, -u * x, -u * y};
        const double row2[8] = {0, 0, 0, x, y, 1, -v * x, -v * y};
        accumulate(row1, u, w);
        accumulate(row2, v, w);
    }
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < i; ++j) ata[size_t(i) * 8 + j] = ata[size_t(j) * 8 + i];

    std::vector<double> h = atb;
    if (!solve_linear(ata, h, 8))
        throw DegenerateGeometryError("homography system is singular (collinear or repeated points)");

    // Denormalize: H = T_ref^-1 * Hn * T_mov.
    const std::array<double, 9> hn = {h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0};
    const std::array<double, 9> tm = {nm.scale, 0, -nm.scale * nm.tx,
                                      0, nm.scale, -nm.scale * nm.ty,
                                      0, 0, 1};
    const std::array<double, 9> tr_inv = {1.0 / nr.scale, 0, nr.tx,
                                          0, 1.0 / nr.scale, nr.ty,
                                          0, 0, 1};
    auto matmul = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
        std::array<double, 9> c{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) c[size_t(i * 3 + j)] += a[size_t(i * 3 + k)] * b[size_t(k * 3 + j)];
        return c;
    };
    Homography out;
    out.m = matmul(tr_inv, matmul(hn, tm));
    if (std::abs(out.m[8]) < 1e-12)
        throw DegenerateGeometryError("homography normalization failed (h22 ~ 0)");
    const double s = 1.0 / out.m[8];
    for (auto& v : out.m) v *= s;

    // Sanity: upper-left 2x2 must stay invertible for a camera-rotation warp.
    if (std::abs(out.m[0] * out.m[4] - out.m[1] * out.m[3]) < 1e-9)
        throw DegenerateGeometryError("degenerate homography (2x2 block singular)");
    return out;
}

} // namespace

Homography homography_from_points(const std::vector<std::array<double, 2>>& moving_pts,
                                  const std::vector<std::array<double, 2>>& reference_pts) {
    if (moving_pts.size() != reference_pts.size())
        throw DimensionError("correspondence lists differ in length");
    if (moving_pts.size() < 4)
        throw DegenerateGeometryError("need at least 4 correspondences");
    Homography h = solve_dlt_weighted(moving_pts, reference_pts, {});
    double sum = 0.0;
    for (size_t i = 0; i < moving_pts.size(); ++i) {
        const auto p = h.apply(moving_pts[i][0], moving_pts[i][1]);
        sum += (p[0] - reference_pts[i][0]) * (p[0] - reference_pts[i][0]) +
               (p[1] - reference_pts[i][1]) * (p[1] - reference_pts[i][1]);
    }
    h.reprojection_rms = std::sqrt(sum / double(moving_pts.size()));
    return h;
}

namespace {

double block_ncc(const std::vector<float>& a, const std::vector<float>& b, int w, int /*h*/, int ax,
                 int ay, int bx, int by, int radius) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    const int n = (2 * radius + 1) * (2 * radius + 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        const float* ra = a.data() + size_t(ay + dy) * w + ax;
        const float* rb = b.data() + size_t(by + dy) * w + bx;
        for (int dx = -radius; dx <= radius; ++dx) {
            const double va = ra[dx], vb = rb[dx];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    const double var_a = saa - sa * sa / n;
    const double var_b = sbb - sb * sb / n;
    if (var_a < 1e-6 || var_b < 1e-6) return -1.0;
    return (sab - sa * sb / n) / std::sqrt(var_a * var_b);
}

} // namespace

Homography estimate_homography(const EncodedImage& reference, const EncodedImage& moving,
                               const HomographyParams& params) {
    if (!reference.same_size(moving))
        throw DimensionError("estimate_homography: image dimensions differ");
    const int w = reference.width, h = reference.height;

    // Global translation prior so the per-block search stays small.
    double prior_x = 0.0, prior_y = 0.0;
    try {
        TranslationParams tp;
        tp.search_bound = params.prior_bound;
        tp.confidence_threshold = 1.5;
        const Translation prior = estimate_translation(reference, moving, tp);
        prior_x = prior.dx;
        prior_y = prior.dy;
    } catch (const LowConfidenceError&) {
        // fall back to zero prior; block matching decides
    } catch (const DimensionError&) {
    }

    const int br = params.block_size / 2;
    const int search = params.search_radius;
    const int pix = int(std::lround(prior_x));
    const int piy = int(std::lround(prior_y));

    std::vector<float> la(size_t(w) * h), lb(size_t(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            la[size_t(y) * w + x] =
                luma601(reference.at(x, y, 0), reference.at(x, y, 1), reference.at(x, y, 2));
            lb[size_t(y) * w + x] =
                luma601(moving.at(x, y, 0), moving.at(x, y, 1), moving.at(x, y, 2));
        }
    // Light pre-smoothing suppresses the interpolation bias of the
    // gradient-based refinement.
    {
        std::vector<float> tmp(size_t(w) * h);
        gaussian_blur_plane(la.data(), tmp.data(), w, h, 1.0f);
        la.swap(tmp);
        gaussian_blur_plane(lb.data(), tmp.data(), w, h, 1.0f);
        lb.swap(tmp);
    }

    std::vector<std::array<double, 2>> mov_pts, ref_pts;
    const int margin_x = br + search + std::abs(pix) + 2;
    const int margin_y = br + search + std::abs(piy) + 2;
    for (int cy = margin_y; cy + margin_y < h; cy += params.grid_step) {
        for (int cx = margin_x; cx + margin_x < w; cx += params.grid_step) {
            // Texture gate.
            double s = 0, ss = 0;
            for (int dy = -br; dy <= br; ++dy)
                for (int dx = -br; dx <= br; ++dx) {
                    const double v = la[size_t(cy + dy) * w + cx + dx];
                    s += v;
                    ss += v * v;
                }
            const int bn = (2 * br + 1) * (2 * br + 1);
            const double stddev = std::sqrt(std::max(0.0, ss / bn - (s / bn) * (s / bn)));
            if (stddev < params.min_block_stddev) continue;

            double best = -2.0;
            int bu = 0, bv = 0;
            for (int dv = -search; dv <= search; ++dv) {
                for (int du = -search; du <= search; ++du) {
                    const double ncc =
                        block_ncc(la, lb, w, h, cx, cy, cx + pix + du, cy + piy + dv, br);
                    if (ncc > best) {
                        best = ncc;
                        bu = du;
                        bv = dv;
                    }
                }
            }
            if (best < params.ncc_threshold) continue;

            // Gradient (Lucas-Kanade) sub-pixel refinement of the match.
            double du = double(pix + bu), dv = double(piy + bv);
            for (int iter = 0; iter < 4; ++iter) {
                double gxx = 0, gyy = 0, gxy = 0, bx2 = 0, by2 = 0;
                bool oob = false;
                for (int oy = -br; oy <= br && !oob; ++oy) {
                    for (int ox = -br; ox <= br; ++ox) {
                        const double sx = cx + ox + du, sy = cy + oy + dv;
                        if (sx < 1 || sx >= w - 2 || sy < 1 || sy >= h - 2) {
                            oob = true;
                            break;
                        }
                        const int ix = int(sx), iy = int(sy);
                        const double fx = sx - ix, fy = sy - iy;
                        auto sample = [&](int xx, int yy) {
                            return double(lb[size_t(yy) * w + xx]);
                        };
                        auto bil = [&](int xo, int yo) {
                            return (sample(ix + xo, iy + yo) * (1 - fx) +
                                    sample(ix + 1 + xo, iy + yo) * fx) *
                                       (1 - fy) +
                                   (sample(ix + xo, iy + 1 + yo) * (1 - fx) +
                                    sample(ix + 1 + xo, iy + 1 + yo) * fx) *
                                       fy;
                        };
                        const double v = bil(0, 0);
                        const double gx = 0.5 * (bil(1, 0) - bil(-1, 0));
                        const double gy = 0.5 * (bil(0, 1) - bil(0, -1));
                        const double e = v - double(la[size_t(cy + oy) * w + cx + ox]);
                        gxx += gx * gx;
                        gyy += gy * gy;
                        gxy += gx * gy;
                        bx2 += gx * e;
                        by2 += gy * e;
                    }
                }
                if (oob) break;
                const double det = gxx * gyy - gxy * gxy;
                if (std::abs(det) < 1e-9) break;
                const double step_x = -(gyy * bx2 - gxy * by2) / det;
                const double step_y = -(gxx * by2 - gxy * bx2) / det;
                du += std::clamp(step_x, -1.0, 1.0);
                dv += std::clamp(step_y, -1.0, 1.0);
                if (std::abs(step_x) < 0.01 && std::abs(step_y) < 0.01) break;
            }
            if (std::abs(du - (pix + bu)) > 1.5 || std::abs(dv - (piy + bv)) > 1.5) {
                du = double(pix + bu);
                dv = double(piy + bv);
            }
            ref_pts.push_back({double(cx), double(cy)});
            mov_pts.push_back({double(cx) + du, double(cy) + dv});
        }
    }

    if (mov_pts.size() < 8)
        throw DegenerateGeometryError("not enough textured matches (" +
                                      std::to_string(mov_pts.size()) + ")");

    // Spread check: collinear correspondence sets cannot fix a homography.
    {
        double cx = 0, cy = 0;
        for (const auto& p : ref_pts) {
            cx += p[0];
            cy += p[1];
        }
        cx /= double(ref_pts.size());
        cy /= double(ref_pts.size());
        double sxx = 0, syy = 0, sxy = 0;
        for (const auto& p : ref_pts) {
            sxx += (p[0] - cx) * (p[0] - cx);
            syy += (p[1] - cy) * (p[1] - cy);
            sxy += (p[0] - cx) * (p[1] - cy);
        }
        const double tr = sxx + syy;
        const double det = sxx * syy - sxy * sxy;
        const double lambda_min = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det)));
        if (lambda_min < 16.0) throw DegenerateGeometryError("correspondences nearly collinear");
    }

    // Robust irls: Huber weights on reprojection residuals.
    std::vector<double> weights(mov_pts.size(), 1.0);
    Homography best_h;
    for (int iter = 0; iter < 5; ++iter) {
        best_h = solve_dlt_weighted(mov_pts, ref_pts, weights);
        std::vector<double> residuals(mov_pts.size());
        for (size_t i = 0; i < mov_pts.size(); ++i) {
            const auto p = best_h.apply(mov_pts[i][0], mov_pts[i][1]);
            residuals[i] = std::hypot(p[0] - ref_pts[i][0], p[1] - ref_pts[i][1]);
        }
        std::vector<double> sorted = residuals;
        std::nth_element(sorted.begin(), sorted.begin() + long(sorted.size() / 2), sorted.end());
        const double med = sorted[sorted.size() / 2];
        const double hub = std::max(1.5 * med, 0.05);
        for (size_t i = 0; i < weights.size(); ++i)
            weights[i] = residuals[i] <= hub ? 1.0 : hub / residuals[i];
    }

    // Final rms over inliers (weight above half).
    double sum = 0.0;
    size_t inliers = 0;
    for (size_t i = 0; i < mov_pts.size(); ++i) {
        if (weights[i] < 0.5) continue;
        const auto p = best_h.apply(mov_pts[i][0], mov_pts[i][1]);
        const double r2 = (p[0] - ref_pts[i][0]) * (p[0] - ref_pts[i][0]) +
                          (p[1] - ref_pts[i][1]) * (p[1] - ref_pts[i][1]);
        sum += r2;
        ++inliers;
    }
    if (inliers < 6) throw DegenerateGeometryError("too few inliers after reweighting");
    best_h.reprojection_rms = std::sqrt(sum / double(inliers));
    return best_h;
}

namespace {

template <typename Img, typename Store>
void warp_impl(const Img& img, const Homography& h, Img& out, Mask& valid, Store store) {
    const Homography inv = h.inverse();
    const int w = img.width, hh = img.height;
    for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < w; ++x) {
            const double den = inv.m[6] * x + inv.m[7] * y + inv.m[8];
            if (std::abs(den) < 1e-12) continue;
            const double sx = (inv.m[0] * x + inv.m[1] * y + inv.m[2]) / den;
            const double sy = (inv.m[3] * x + inv.m[4] * y + inv.m[5]) / den;
            if (sx < 0.0 || sx > double(w - 1) || sy < 0.0 || sy > double(hh - 1)) continue;
            const int ix = std::min(int(std::floor(sx)), w - 2 >= 0 ? w - 2 : 0);
            const int iy = std::min(int(std::floor(sy)), hh - 2 >= 0 ? hh - 2 : 0);
            const double fx = sx - ix, fy = sy - iy;
            valid.at(x, y) = 1;
            for (int c = 0; c < 3; ++c) {
                const double v00 = img.at(ix, iy, c), v10 = img.at(ix + 1, iy, c);
                const double v01 = img.at(ix, iy + 1, c), v11 = img.at(ix + 1, iy + 1, c);
                const double v =
                    (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
                store(out, x, y, c, v);
            }
        }
    }
}

} // namespace

WarpedEncoded warp(const EncodedImage& img, const Homography& h) {
    WarpedEncoded out;
    out.image = EncodedImage(img.width, img.height, 0);
    out.valid = Mask(img.width, img.height, 0);
    warp_impl(img, h, out.image, out.valid, [](EncodedImage& o, int x, int y, int c, double v) {
        o.at(x, y, c) = uint8_t(std::lround(clampf(float(v), 0.f, 255.f)));
    });
    return out;
}

WarpedLinear warp(const LinearImage& img, const Homography& h) {
    WarpedLinear out;
    out.image = LinearImage(img.width, img.height, 0.f);
    out.valid = Mask(img.width, img.height, 0);
    warp_impl(img, h, out.image, out.valid,
              [](LinearImage& o, int x, int y, int c, double v) { o.at(x, y, c) = float(v); });
    return out;
}

} // namespace flarekit
