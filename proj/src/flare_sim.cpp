#include "flarekit/flare_sim.hpp"

#include <cmath>
#include <json.hpp>

#include "flarekit/isp.hpp"
#include "flarekit/util.hpp"

using nlohmann::json;

namespace flarekit {

std::string flare_kind_name(FlareKind k) {
    return k == FlareKind::Scattering ? "scattering" : "reflective";
}

FlareKind flare_kind_from_name(const std::string& name) {
    if (name == "scattering") return FlareKind::Scattering;
    if (name == "reflective") return FlareKind::Reflective;
    throw ParseError("unknown flare kind: " + name);
}

std::string SceneSpec::to_json() const {
    json j;
    j["width"] = width;
    j["height"] = height;
    j["background_low"] = background_low;
    j["background_high"] = background_high;
    j["background_gamma"] = background_gamma;
    j["detail"] = detail;
    j["seed"] = seed;
    j["sources"] = json::array();
    for (const auto& s : sources)
        j["sources"].push_back(
            {{"cx", s.cx}, {"cy", s.cy}, {"radius", s.radius}, {"intensity", s.intensity}});
    return j.dump();
}

SceneSpec SceneSpec::from_json(const std::string& text) {
    SceneSpec spec;
    try {
        const json j = json::parse(text);
        spec.width = j.at("width").get<int>();
        spec.height = j.at("height").get<int>();
        spec.background_low = j.value("background_low", spec.background_low);
        spec.background_high = j.value("background_high", spec.background_high);
        spec.background_gamma = j.value("background_gamma", spec.background_gamma);
        spec.detail = j.value("detail", spec.detail);
        spec.seed = j.at("seed").get<uint64_t>();
        for (const auto& s : j.value("sources", json::array()))
            spec.sources.push_back({s.at("cx").get<float>(), s.at("cy").get<float>(),
                                    s.at("radius").get<float>(), s.at("intensity").get<float>()});
    } catch (const json::exception& e) {
        throw ParseError(std::string("scene spec: ") + e.what());
    }
    return spec;
}

std::string FlareSpec::to_json() const {
    json j;
    j["kind"] = flare_kind_name(kind);
    j["seed"] = seed;
    j["scattering"] = {{"glare_sigma", scattering.glare_sigma},
                       {"glare_gain", scattering.glare_gain},
                       {"streak_count", scattering.streaks.count},
                       {"streak_angle", scattering.streaks.angle},
                       {"streak_length", scattering.streaks.length},
                       {"streak_gain", scattering.streaks.gain},
                       {"veiling", scattering.veiling}};
    j["reflective"] = {{"center_x", reflective.center_x},
                       {"center_y", reflective.center_y},
                       {"ghost_gain", reflective.ghost_gain},
                       {"defocus_radius", reflective.defocus_radius}};
    return j.dump();
}

FlareSpec FlareSpec::from_json(const std::string& text) {
    FlareSpec spec;
    try {
        const json j = json::parse(text);
        spec.kind = flare_kind_from_name(j.at("kind").get<std::string>());
        spec.seed = j.value("seed", uint64_t(0));
        if (j.contains("scattering")) {
            const auto& s = j.at("scattering");
            spec.scattering.glare_sigma = s.value("glare_sigma", spec.scattering.glare_sigma);
            spec.scattering.glare_gain = s.value("glare_gain", spec.scattering.glare_gain);
            spec.scattering.streaks.count = s.value("streak_count", 0);
            spec.scattering.streaks.angle = s.value("streak_angle", 0.f);
            spec.scattering.streaks.length = s.value("streak_length", 0.f);
            spec.scattering.streaks.gain = s.value("streak_gain", 0.f);
            spec.scattering.veiling = s.value("veiling", 0.f);
        }
        if (j.contains("reflective")) {
            const auto& r = j.at("reflective");
            spec.reflective.center_x = r.value("center_x", 0.f);
            spec.reflective.center_y = r.value("center_y", 0.f);
            spec.reflective.ghost_gain = r.value("ghost_gain", 0.f);
            spec.reflective.defocus_radius = r.value("defocus_radius", 0.f);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("flare spec: ") + e.what());
    }
    return spec;
}

namespace {

void validate_scene(const SceneSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0)
        throw InvalidMetadataError("scene dimensions must be positive");
    if (!(spec.background_low >= 0.f) || !(spec.background_high <= 0.5f) ||
        !(spec.background_low <= spec.background_high))
        throw InvalidMetadataError("scene background range must lie in [0, 0.5]");
    if (!(spec.background_gamma > 0.f))
        throw InvalidMetadataError("background_gamma must be > 0");
    for (const auto& s : spec.sources) {
        if (!(s.radius > 0.f)) throw InvalidMetadataError("source radius must be > 0");
        if (!(s.intensity >= 1.f)) throw InvalidMetadataError("source intensity must be >= 1");
        if (s.cx < 0 || s.cx >= float(spec.width) || s.cy < 0 || s.cy >= float(spec.height))
            throw InvalidMetadataError("source center must lie inside the frame");
    }
}

// Smooth seeded value noise: bilinear interpolation of a coarse lattice.
float value_noise(uint64_t seed, float x, float y, float cell) {
    auto lattice = [seed](int ix, int iy) {
        uint64_t v = seed;
        v ^= uint64_t(uint32_t(ix)) * 0x9e3779b97f4a7c15ull;
        v ^= uint64_t(uint32_t(iy)) * 0xc2b2ae3d27d4eb4full;
        v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
        v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
        v ^= v >> 31;
        return float(v >> 11) * float(0x1.0p-53);
    };
    const float fx = x / cell, fy = y / cell;
    const int ix = int(std::floor(fx)), iy = int(std::floor(fy));
    const float tx = fx - float(ix), ty = fy - float(iy);
    const float sx = tx * tx * (3.f - 2.f * tx);
    const float sy = ty * ty * (3.f - 2.f * ty);
    const float a = lattice(ix, iy), b = lattice(ix + 1, iy);
    const float c = lattice(ix, iy + 1), d = lattice(ix + 1, iy + 1);
    return (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
}

} // namespace

LinearImage synth_scene(const SceneSpec& spec) {
    validate_scene(spec);
    LinearImage img(spec.width, spec.height);

    Rng rng(spec.seed);
    // Gradient direction and two noise octaves per channel.
    const float gx = float(rng.uniform(-1.0, 1.0));
    const float gy = float(rng.uniform(-1.0, 1.0));
    // Both octaves stay wider than the removers' 63 px background opening,
    // so scene texture never reads as over-background excess.
    const float cell_coarse = float(rng.uniform(120.0, 200.0));
    const float cell_fine = float(rng.uniform(64.0, 96.0));
    const uint64_t noise_seed = rng.next_u64();
    float tint[3];
    for (auto& t : tint) t = float(rng.uniform(0.75, 1.0));

    const float lo = spec.background_low, hi = spec.background_high;
    const float span = hi - lo;
    const float diag = std::sqrt(float(spec.width * spec.width + spec.height * spec.height));
    std::vector<float> field(size_t(spec.width) * spec.height);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const float grad = 0.5f + 0.5f * (gx * float(x) + gy * float(y)) / diag;
            const float n0 = value_noise(noise_seed, float(x), float(y), cell_coarse);
            const float n1 = value_noise(noise_seed ^ 0x5555aaaa1234ull, float(x), float(y), cell_fine);
            field[size_t(y) * spec.width + x] = 0.38f * grad + 0.34f * n0 + 0.28f * n1;
        }
    }
    // Stretch the field between its percentiles: every scene keeps true
    // near-black content at background_low regardless of seed.
    const float p_lo = percentile(field, 2.0);
    const float p_hi = percentile(field, 98.0);
    const float inv_range = 1.0f / std::max(p_hi - p_lo, 1e-6f);
    // Optional fine chroma texture: per-channel multiplicative dips.
    const float detail = clampf(spec.detail, 0.f, 1.f);
    const float cell_detail = float(rng.uniform(3.0, 6.0));
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const float t = clampf((field[size_t(y) * spec.width + x] - p_lo) * inv_range, 0.f, 1.f);
            const float base = lo + span * std::pow(t, spec.background_gamma);
            for (int c = 0; c < 3; ++c) {
                float v = base * tint[c];
                if (detail > 0.f)
                    v *= 1.0f - detail * value_noise(noise_seed ^ (0x77aa11ull + uint64_t(c) * 97),
                                                     float(x), float(y), cell_detail);
                img.at(x, y, c) = v;
            }
        }
    }

    for (const auto& s : spec.sources) {
        const int x0 = std::max(0, int(std::floor(s.cx - s.radius - 2)));
        const int x1 = std::min(spec.width - 1, int(std::ceil(s.cx + s.radius + 2)));
        const int y0 = std::max(0, int(std::floor(s.cy - s.radius - 2)));
        const int y1 = std::min(spec.height - 1, int(std::ceil(s.cy + s.radius + 2)));
        const float rim = std::max(1.0f, 0.15f * s.radius);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const float dx = float(x) - s.cx, dy = float(y) - s.cy;
                const float d = std::sqrt(dx * dx + dy * dy);
                const float t = clampf((s.radius - d) / rim, 0.f, 1.f);
                if (t <= 0.f) continue;
                for (int c = 0; c < 3; ++c) img.at(x, y, c) += s.intensity * t;
            }
        }
    }
    return img;
}

namespace {

struct KernelTap {
    int dx, dy;
    float w;
};

std::vector<KernelTap> gaussian_taps(float sigma) {
    const int radius = std::max(1, int(std::ceil(3.5f * sigma)));
    std::vector<KernelTap> taps;
    taps.reserve(size_t(2 * radius + 1) * (2 * radius + 1));
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = std::exp(-0.5 * (dx * dx + dy * dy) / (double(sigma) * sigma));
            taps.push_back({dx, dy, float(v)});
            sum += v;
        }
    }
    for (auto& t : taps) t.w = float(t.w / sum); // unit sum after truncation
    return taps;
}

// Oriented line kernel: anisotropic Gaussian, aspect >= 8:1.
std::vector<KernelTap> streak_taps(float angle, float length) {
    const float sigma_long = std::max(1.0f, length / 4.0f);
    const float sigma_short = std::max(0.5f, sigma_long / 8.0f);
    const int radius = int(std::ceil(2.0f * sigma_long));
    const float ca = std::cos(angle), sa = std::sin(angle);
    std::vector<KernelTap> taps;
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const float u = ca * float(dx) + sa * float(dy);
            const float v = -sa * float(dx) + ca * float(dy);
            const double e = -0.5 * (double(u) * u / (double(sigma_long) * sigma_long) +
                                     double(v) * v / (double(sigma_short) * sigma_short));
            if (e < -12.0) continue;
            const double wv = std::exp(e);
            taps.push_back({dx, dy, float(wv)});
            sum += wv;
        }
    }
    for (auto& t : taps) t.w = float(t.w / sum);
    return taps;
}

std::vector<KernelTap> disk_taps(float radius) {
    const int r = int(std::ceil(radius + 0.5f));
    std::vector<KernelTap> taps;
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const float d = std::sqrt(float(dx * dx + dy * dy));
            const float w = clampf(radius + 0.5f - d, 0.f, 1.f); // antialiased rim
            if (w <= 0.f) continue;
            taps.push_back({dx, dy, w});
            sum += w;
        }
    }
    for (auto& t : taps) t.w = float(t.w / sum);
    return taps;
}

// Excess above saturation; the part of the scene that keeps spilling light
// after the sensor clips.
LinearImage source_excess(const LinearImage& clean) {
    LinearImage s(clean.width, clean.height);
    for (size_t i = 0; i < clean.samples.size(); ++i)
        s.samples[i] = std::max(clean.samples[i] - 1.0f, 0.f);
    return s;
}

// Sparse scatter-convolution: sources cover few pixels, so iterate them.
void scatter_convolve(const LinearImage& src, const std::vector<KernelTap>& taps, float gain,
                      LinearImage& acc) {
    const int w = src.width, h = src.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = src.at(x, y, c);
                if (v <= 0.f) continue;
                const float gv = gain * v;
                for (const auto& t : taps) {
                    const int xx = x + t.dx, yy = y + t.dy;
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                    acc.at(xx, yy, c) += gv * t.w;
                }
            }
        }
    }
}

FlarePair compose_pair(const LinearImage& clean, LinearImage flare, const FlareSpec& spec) {
    FlarePair pair;
    pair.corrupted = clean;
    for (size_t i = 0; i < clean.samples.size(); ++i) {
        const float v = clean.samples[i] + flare.samples[i];
        pair.corrupted.samples[i] = v > kLinearCeiling ? kLinearCeiling : v;
    }
    pair.clean = clean;
    pair.flare_layer = std::move(flare);
    pair.spec = spec;
    return pair;
}

} // namespace

FlarePair apply_scattering_flare(const LinearImage& clean, const FlareSpec& spec) {
    if (spec.kind != FlareKind::Scattering)
        throw ConfigError("apply_scattering_flare: spec kind is not scattering");
    const auto& sc = spec.scattering;
    if (!(sc.glare_gain >= 0.f) || !(sc.veiling >= 0.f) || !(sc.streaks.gain >= 0.f) ||
        !std::isfinite(sc.glare_gain) || !std::isfinite(sc.veiling))
        throw InvalidMetadataError("scattering gains must be finite and >= 0");

    LinearImage flare(clean.width, clean.height, 0.f);
    const bool need_excess =
        sc.glare_gain > 0.f || (sc.streaks.count > 0 && sc.streaks.gain > 0.f);
    if (need_excess) {
        const LinearImage excess = source_excess(clean);
        if (sc.glare_gain > 0.f)
            scatter_convolve(excess, gaussian_taps(sc.glare_sigma), sc.glare_gain, flare);
        if (sc.streaks.count > 0 && sc.streaks.gain > 0.f) {
            for (int k = 0; k < sc.streaks.count; ++k) {
                const float angle =
                    sc.streaks.angle + float(k) * 3.14159265f / float(sc.streaks.count);
                scatter_convolve(excess, streak_taps(angle, sc.streaks.length), sc.streaks.gain,
                                 flare);
            }
        }
    }
    if (sc.veiling > 0.f)
        for (auto& v : flare.samples) v += sc.veiling;

    return compose_pair(clean, std::move(flare), spec);
}

FlarePair apply_reflective_flare(const LinearImage& clean, const FlareSpec& spec) {
    if (spec.kind != FlareKind::Reflective)
        throw ConfigError("apply_reflective_flare: spec kind is not reflective");
    const auto& rf = spec.reflective;
    if (rf.ghost_gain < 0.f || rf.ghost_gain > 1.f)
        throw InvalidMetadataError("ghost_gain must lie in [0,1]");
    if (rf.defocus_radius < 0.f) throw InvalidMetadataError("defocus_radius must be >= 0");
    if (rf.center_x < 0 || rf.center_x >= float(clean.width) || rf.center_y < 0 ||
        rf.center_y >= float(clean.height))
        throw InvalidMetadataError("optical center must lie inside the frame");

    const int w = clean.width, h = clean.height;
    LinearImage ghost(w, h, 0.f);
    if (rf.ghost_gain > 0.f) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const float peak = std::max({clean.at(x, y, 0), clean.at(x, y, 1), clean.at(x, y, 2)});
                if (peak < 1.0f) continue; // only saturated source pixels ghost
                const float tx = 2.f * rf.center_x - float(x);
                const float ty = 2.f * rf.center_y - float(y);
                const int ix = int(std::floor(tx)), iy = int(std::floor(ty));
                const float fx = tx - float(ix), fy = ty - float(iy);
                const float wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                const int off[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
                for (int k = 0; k < 4; ++k) {
                    const int xx = ix + off[k][0], yy = iy + off[k][1];
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue; // clipped off-frame
                    for (int c = 0; c < 3; ++c)
                        ghost.at(xx, yy, c) += rf.ghost_gain * clean.at(x, y, c) * wgt[k];
                }
            }
        }
    }

    LinearImage flare(w, h, 0.f);
    if (rf.defocus_radius > 0.f) {
        scatter_convolve(ghost, disk_taps(rf.defocus_radius), 1.0f, flare);
    } else {
        flare = std::move(ghost);
    }
    return compose_pair(clean, std::move(flare), spec);
}

RawImage remosaic(const LinearImage& img, const RawMetadata& meta) {
    if (img.width % 2 != 0 || img.height % 2 != 0)
        throw InvalidMetadataError("remosaic requires even dimensions");

    // Invert the 3x3 color matrix.
    const auto& m = meta.color_matrix;
    const double det = double(m[0]) * (double(m[4]) * m[8] - double(m[5]) * m[7]) -
                       double(m[1]) * (double(m[3]) * m[8] - double(m[5]) * m[6]) +
                       double(m[2]) * (double(m[3]) * m[7] - double(m[4]) * m[6]);
    if (std::abs(det) < 1e-12) throw InvalidMetadataError("color matrix is singular");
    const double inv_det = 1.0 / det;
    double inv[9];
    inv[0] = (double(m[4]) * m[8] - double(m[5]) * m[7]) * inv_det;
    inv[1] = (double(m[2]) * m[7] - double(m[1]) * m[8]) * inv_det;
    inv[2] = (double(m[1]) * m[5] - double(m[2]) * m[4]) * inv_det;
    inv[3] = (double(m[5]) * m[6] - double(m[3]) * m[8]) * inv_det;
    inv[4] = (double(m[0]) * m[8] - double(m[2]) * m[6]) * inv_det;
    inv[5] = (double(m[2]) * m[3] - double(m[0]) * m[5]) * inv_det;
    inv[6] = (double(m[3]) * m[7] - double(m[4]) * m[6]) * inv_det;
    inv[7] = (double(m[1]) * m[6] - double(m[0]) * m[7]) * inv_det;
    inv[8] = (double(m[0]) * m[4] - double(m[1]) * m[3]) * inv_det;

    for (float g : meta.wb_gains)
        if (!(g > 0.f)) throw InvalidMetadataError("wb gains must be positive");

    RawImage raw;
    raw.width = img.width;
    raw.height = img.height;
    raw.cfa = meta.cfa;
    raw.bit_depth = meta.bit_depth;
    raw.black_level = meta.black_level;
    raw.white_level = meta.white_level;
    raw.wb_gains = meta.wb_gains;
    raw.color_matrix = meta.color_matrix;
    raw.pixels.resize(size_t(img.width) * img.height);

    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
            const int c = cfa_channel_at(meta.cfa, x, y);
            double cam;
            if (c == 0)
                cam = inv[0] * r + inv[1] * g + inv[2] * b;
            else if (c == 1)
                cam = inv[3] * r + inv[4] * g + inv[5] * b;
            else
                cam = inv[6] * r + inv[7] * g + inv[8] * b;
            cam /= double(meta.wb_gains[size_t(c)]);
            const int bl = meta.black_level[size_t(cfa_cell_index(x, y))];
            double counts = double(bl) + cam * double(meta.white_level - bl);
            if (counts < 0) counts = 0;
            if (counts > double(meta.white_level)) counts = double(meta.white_level);
            raw.at(x, y) = uint16_t(std::lround(counts));
        }
    }
    return raw;
}

RawImage add_sensor_noise(const RawImage& raw, float sigma_fraction, uint64_t seed) {
    if (!(sigma_fraction >= 0.f)) throw InvalidMetadataError("noise sigma must be >= 0");
    if (sigma_fraction == 0.f) return raw;
    RawImage out = raw;
    Rng rng(seed);
    for (size_t i = 0; i < out.pixels.size(); ++i) {
        const int cell = cfa_cell_index(int(i % size_t(raw.width)), int(i / size_t(raw.width)));
        const double sigma = double(sigma_fraction) * double(raw.white_level - raw.black_level[size_t(cell)]);
        double v = double(out.pixels[i]) + rng.normal() * sigma;
        if (v < 0) v = 0;
        if (v > double(raw.white_level)) v = double(raw.white_level);
        out.pixels[i] = uint16_t(std::lround(v));
    }
    return out;
}

} // namespace flarekit
