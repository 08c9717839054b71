#include "flarekit/filters.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "flarekit/util.hpp"

namespace flarekit {

std::vector<float> gaussian_kernel(float sigma) {
    const int radius = std::max(1, int(std::ceil(3.0f * sigma)));
    std::vector<float> k(size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * double(i) * double(i) / (double(sigma) * sigma));
        k[size_t(i + radius)] = float(v);
        sum += v;
    }
    for (auto& v : k) v = float(v / sum);
    return k;
}

namespace {

void convolve_rows(const float* src, float* dst, int w, int h, const std::vector<float>& k) {
    const int radius = int(k.size() / 2);
    for (int y = 0; y < h; ++y) {
        const float* row = src + size_t(y) * w;
        float* out = dst + size_t(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += double(k[size_t(i + radius)]) * row[reflect101(x + i, w)];
            out[x] = float(acc);
        }
    }
}

void convolve_cols(const float* src, float* dst, int w, int h, const std::vector<float>& k) {
    const int radius = int(k.size() / 2);
    for (int y = 0; y < h; ++y) {
        float* out = dst + size_t(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += double(k[size_t(i + radius)]) * src[size_t(reflect101(y + i, h)) * w + x];
            out[x] = float(acc);
        }
    }
}

enum class Extreme { Min, Max };

// Sliding-window min/max along one line of values (deque of indices).
void running_extreme(const float* src, float* dst, int n, int stride, int radius, Extreme e) {
    std::deque<int> q; // indices into the line, monotone values
    auto better = [e](float a, float b) { return e == Extreme::Min ? a <= b : a >= b; };
    auto value = [&](int i) { return src[size_t(i) * stride]; };
    for (int i = 0; i < n + radius; ++i) {
        if (i < n) {
            while (!q.empty() && better(value(i), value(q.back()))) q.pop_back();
            q.push_back(i);
        }
        const int out = i - radius;
        if (out >= 0 && out < n) {
            while (q.front() < out - radius) q.pop_front();
            dst[size_t(out) * stride] = value(q.front());
        }
    }
}

void extreme_square(const float* src, float* dst, int w, int h, int radius, Extreme e) {
    // reflect-101 padding keeps border-touching structures whole.
    const int pw = w + 2 * radius, ph = h + 2 * radius;
    std::vector<float> padded(size_t(pw) * ph);
    for (int y = 0; y < ph; ++y) {
        const int sy = reflect101(y - radius, h);
        for (int x = 0; x < pw; ++x)
            padded[size_t(y) * pw + x] = src[size_t(sy) * w + reflect101(x - radius, w)];
    }
    std::vector<float> tmp(size_t(pw) * ph);
    for (int y = 0; y < ph; ++y)
        running_extreme(padded.data() + size_t(y) * pw, tmp.data() + size_t(y) * pw, pw, 1, radius,
                        e);
    std::vector<float> cols(size_t(pw) * ph);
    for (int x = 0; x < pw; ++x)
        running_extreme(tmp.data() + x, cols.data() + x, ph, pw, radius, e);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            dst[size_t(y) * w + x] = cols[size_t(y + radius) * pw + (x + radius)];
}

} // namespace

void gaussian_blur_plane(const float* src, float* dst, int w, int h, float sigma) {
    const auto k = gaussian_kernel(sigma);
    std::vector<float> tmp(size_t(w) * h);
    convolve_rows(src, tmp.data(), w, h, k);
    convolve_cols(tmp.data(), dst, w, h, k);
}

void erode_square(const float* src, float* dst, int w, int h, int radius) {
    extreme_square(src, dst, w, h, radius, Extreme::Min);
}

void dilate_square(const float* src, float* dst, int w, int h, int radius) {
    extreme_square(src, dst, w, h, radius, Extreme::Max);
}

void opening_square(const float* src, float* dst, int w, int h, int radius) {
    std::vector<float> eroded(size_t(w) * h);
    erode_square(src, eroded.data(), w, h, radius);
    dilate_square(eroded.data(), dst, w, h, radius);
}

void opening_line(const float* src, float* dst, int w, int h, int half_len, int dx, int dy) {
    const size_t n = size_t(w) * h;
    std::vector<float> eroded(n);
    auto pass = [&](const float* in, float* out, bool erode) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                float v = in[size_t(y) * w + x];
                for (int i = -half_len; i <= half_len; ++i) {
                    const int xx = x + i * dx;
                    const int yy = y + i * dy;
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                    const float s = in[size_t(yy) * w + xx];
                    v = erode ? std::min(v, s) : std::max(v, s);
                }
                out[size_t(y) * w + x] = v;
            }
        }
    };
    pass(src, eroded.data(), true);
    pass(eroded.data(), dst, false);
}

void median3x3_plane(const float* src, float* dst, int w, int h) {
    float window[9];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    window[n++] = src[size_t(reflect101(y + dy, h)) * w + reflect101(x + dx, w)];
            std::nth_element(window, window + 4, window + 9);
            dst[size_t(y) * w + x] = window[4];
        }
    }
}

namespace {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offs.emplace_back(dx, dy);
    return offs;
}

} // namespace

Mask erode_disk(const Mask& m, int radius) {
    if (radius <= 0) return m;
    const auto offs = disk_offsets(radius);
    Mask out(m.width, m.height, 0);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            uint8_t v = 1;
            for (auto [dx, dy] : offs) {
                const int xx = x + dx, yy = y + dy;
                if (xx < 0 || xx >= m.width || yy < 0 || yy >= m.height || !m.at(xx, yy)) {
                    v = 0;
                    break;
                }
            }
            out.at(x, y) = v;
        }
    }
    return out;
}

Mask dilate_disk(const Mask& m, int radius) {
    if (radius <= 0) return m;
    const auto offs = disk_offsets(radius);
    Mask out(m.width, m.height, 0);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y)) continue;
            for (auto [dx, dy] : offs) {
                const int xx = x + dx, yy = y + dy;
                if (xx >= 0 && xx < m.width && yy >= 0 && yy < m.height) out.at(xx, yy) = 1;
            }
        }
    }
    return out;
}

Mask open_disk(const Mask& m, int radius) { return dilate_disk(erode_disk(m, radius), radius); }

Mask close_disk(const Mask& m, int radius) { return erode_disk(dilate_disk(m, radius), radius); }

std::vector<int> mask_distance(const Mask& m, int max_steps) {
    const int w = m.width, h = m.height;
    std::vector<int> dist(size_t(w) * h, max_steps);
    std::deque<std::pair<int, int>> frontier;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (m.at(x, y)) {
                dist[size_t(y) * w + x] = 0;
                frontier.emplace_back(x, y);
            }
    while (!frontier.empty()) {
        auto [x, y] = frontier.front();
        frontier.pop_front();
        const int d = dist[size_t(y) * w + x];
        if (d >= max_steps) continue;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int xx = x + dx, yy = y + dy;
                if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                if (dist[size_t(yy) * w + xx] > d + 1) {
                    dist[size_t(yy) * w + xx] = d + 1;
                    frontier.emplace_back(xx, yy);
                }
            }
        }
    }
    return dist;
}

} // namespace flarekit
