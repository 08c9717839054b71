#include "flarekit/isp.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "flarekit/filters.hpp"
#include "flarekit/flare_removal.hpp"
#include "flarekit/jpeg_codec.hpp"
#include "flarekit/util.hpp"

using nlohmann::json;

namespace flarekit {

RawMosaic black_level_correct(const RawImage& raw) {
    raw.validate();
    RawMosaic out;
    out.width = raw.width;
    out.height = raw.height;
    out.cfa = raw.cfa;
    out.samples.resize(size_t(raw.width) * raw.height);
    float scale[4];
    for (int i = 0; i < 4; ++i) scale[i] = 1.0f / float(raw.white_level - raw.black_level[i]);
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
            const int cell = cfa_cell_index(x, y);
            const float v = (float(raw.at(x, y)) - float(raw.black_level[cell])) * scale[cell];
            out.at(x, y) = v < 0.f ? 0.f : v;
        }
    }
    return out;
}

RawMosaic white_balance(const RawMosaic& mosaic, const std::array<float, 3>& gains) {
    for (float g : gains) {
        if (!(g > 0.f) || !std::isfinite(g))
            throw InvalidMetadataError("white balance gains must be positive");
    }
    RawMosaic out = mosaic;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(x, y) *= gains[size_t(cfa_channel_at(out.cfa, x, y))];
    return out;
}

LinearImage demosaic_bilinear(const RawMosaic& mosaic) {
    const int w = mosaic.width, h = mosaic.height;
    if (w % 2 != 0 || h % 2 != 0) throw InvalidMetadataError("mosaic dimensions must be even");
    LinearImage out(w, h);

    // Pairwise sums keep constants exact.
    auto s = [&](int x, int y) { return mosaic.at(reflect101(x, w), reflect101(y, h)); };
    auto avg2 = [](float a, float b) { return (a + b) * 0.5f; };
    auto avg4 = [](float a, float b, float c, float d) { return ((a + b) + (c + d)) * 0.25f; };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int c = cfa_channel_at(mosaic.cfa, x, y);
            const float v = mosaic.at(x, y);
            float r, g, b;
            if (c == 0 || c == 2) {
                // R or B site: green from the 4-cross, opposite from diagonals.
                g = avg4(s(x - 1, y), s(x + 1, y), s(x, y - 1), s(x, y + 1));
                const float opp = avg4(s(x - 1, y - 1), s(x + 1, y - 1), s(x - 1, y + 1), s(x + 1, y + 1));
                r = (c == 0) ? v : opp;
                b = (c == 2) ? v : opp;
            } else {
                // G site: horizontal neighbours share one channel, vertical the other.
                const int ch = cfa_channel_at(mosaic.cfa, x + 1, y);
                const float hp = avg2(s(x - 1, y), s(x + 1, y));
                const float vp = avg2(s(x, y - 1), s(x, y + 1));
                g = v;
                if (ch == 0) {
                    r = hp;
                    b = vp;
                } else {
                    r = vp;
                    b = hp;
                }
            }
            out.at(x, y, 0) = r;
            out.at(x, y, 1) = g;
            out.at(x, y, 2) = b;
        }
    }
    return out;
}

LinearImage color_correct(const LinearImage& img, const std::array<float, 9>& matrix) {
    for (float m : matrix)
        if (!std::isfinite(m)) throw InvalidMetadataError("color matrix must be finite");
    LinearImage out(img.width, img.height);
    for (size_t i = 0; i < img.samples.size(); i += 3) {
        const float r = img.samples[i], g = img.samples[i + 1], b = img.samples[i + 2];
        float o0 = matrix[0] * r + matrix[1] * g + matrix[2] * b;
        float o1 = matrix[3] * r + matrix[4] * g + matrix[5] * b;
        float o2 = matrix[6] * r + matrix[7] * g + matrix[8] * b;
        out.samples[i] = o0 < 0.f ? 0.f : o0;
        out.samples[i + 1] = o1 < 0.f ? 0.f : o1;
        out.samples[i + 2] = o2 < 0.f ? 0.f : o2;
    }
    return out;
}

float srgb_encode(float linear) {
    const float x = clampf(linear, 0.f, 1.f);
    if (x <= 0.0031308f) return 12.92f * x;
    return 1.055f * std::pow(x, 1.0f / 2.4f) - 0.055f;
}

float srgb_decode(float encoded) {
    if (encoded <= 0.04045f) return encoded / 12.92f;
    return std::pow((encoded + 0.055f) / 1.055f, 2.4f);
}

EncodedImage tone_map(const LinearImage& img) {
    EncodedImage out(img.width, img.height);
    for (size_t i = 0; i < img.samples.size(); ++i) {
        const float e = srgb_encode(img.samples[i]);
        out.samples[i] = uint8_t(std::lround(e * 255.0f));
    }
    return out;
}

LinearImage linearize(const EncodedImage& img) {
    // Table once; the transfer is per-code.
    static const auto table = [] {
        std::array<float, 256> t{};
        for (int i = 0; i < 256; ++i) t[size_t(i)] = srgb_decode(float(i) / 255.0f);
        return t;
    }();
    LinearImage out(img.width, img.height);
    for (size_t i = 0; i < img.samples.size(); ++i) out.samples[i] = table[img.samples[i]];
    return out;
}

EncodedImage denoise(const EncodedImage& img, float strength) {
    if (!(strength >= 0.f)) throw ConfigError("denoise strength must be >= 0");
    if (strength == 0.f) return img;
    const float sigma_s = 2.0f * strength;
    const float sigma_r = 25.0f * strength;
    const int radius = std::max(1, int(std::ceil(2.0f * sigma_s)));

    std::vector<float> spatial(size_t(2 * radius + 1) * (2 * radius + 1));
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            spatial[size_t(dy + radius) * (2 * radius + 1) + size_t(dx + radius)] =
                std::exp(-0.5f * float(dx * dx + dy * dy) / (sigma_s * sigma_s));

    // Code differences are integers, so the range weight is a 256-entry table.
    float range[256];
    for (int d = 0; d < 256; ++d)
        range[d] = std::exp(-0.5f * float(d) * float(d) / (sigma_r * sigma_r));

    const int w = img.width, h = img.height;
    EncodedImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int center = img.at(x, y, c);
                // Accumulate weighted differences so constant regions stay
                // bit-exact after rounding.
                double wsum = 0.0, dsum = 0.0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int yy = reflect101(y + dy, h);
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int xx = reflect101(x + dx, w);
                        const int d = int(img.at(xx, yy, c)) - center;
                        const float wgt =
                            spatial[size_t(dy + radius) * (2 * radius + 1) + size_t(dx + radius)] *
                            range[d < 0 ? -d : d];
                        wsum += wgt;
                        dsum += double(wgt) * d;
                    }
                }
                const double v = double(center) + dsum / wsum;
                out.at(x, y, c) = uint8_t(std::lround(clampf(float(v), 0.f, 255.f)));
            }
        }
    }
    return out;
}

EncodedImage sharpen_usm(const EncodedImage& img, float amount, float radius) {
    if (!(amount >= 0.f)) throw ConfigError("sharpen amount must be >= 0");
    if (!(radius > 0.f)) throw ConfigError("sharpen radius must be > 0");
    if (amount == 0.f) return img;

    const int w = img.width, h = img.height;
    const size_t plane_n = size_t(w) * h;
    std::vector<float> plane(plane_n), blurred(plane_n);
    EncodedImage out(w, h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) plane[size_t(y) * w + x] = float(img.at(x, y, c));
        gaussian_blur_plane(plane.data(), blurred.data(), w, h, radius);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const size_t i = size_t(y) * w + x;
                const float v = plane[i] + amount * (plane[i] - blurred[i]);
                out.at(x, y, c) = uint8_t(std::lround(clampf(v, 0.f, 255.f)));
            }
        }
    }
    return out;
}

EncodedImage jpeg_roundtrip(const EncodedImage& img, int quality) {
    if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1,100]");
    const auto bytes = jpeg_encode(img, quality);
    EncodedImage out = jpeg_decode(bytes);
    if (!out.same_size(img)) throw CodecError("jpeg round-trip changed dimensions");
    return out;
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Denoise: return "denoise";
        case Stage::FlareRemoval: return "flare_removal";
        case Stage::Sharpen: return "sharpen";
        case Stage::Compression: return "compression";
    }
    return "denoise";
}

Stage stage_from_name(const std::string& name) {
    if (name == "denoise") return Stage::Denoise;
    if (name == "flare_removal") return Stage::FlareRemoval;
    if (name == "sharpen") return Stage::Sharpen;
    if (name == "compression") return Stage::Compression;
    throw ParseError("unknown pipeline stage: " + name);
}

bool PipelineConfig::has_stage(Stage s) const {
    for (Stage b : backend_order)
        if (b == s) return true;
    return false;
}

void PipelineConfig::validate() const {
    for (size_t i = 0; i < backend_order.size(); ++i)
        for (size_t j = i + 1; j < backend_order.size(); ++j)
            if (backend_order[i] == backend_order[j])
                throw ConfigError("duplicate stage in backend_order: " +
                                  stage_name(backend_order[i]));
    if (!(denoise_strength >= 0.f)) throw ConfigError("denoise_strength must be >= 0");
    if (!(sharpen_amount >= 0.f) || sharpen_amount > 3.f)
        throw ConfigError("sharpen_amount must be in [0,3]");
    if (!(sharpen_radius > 0.f)) throw ConfigError("sharpen_radius must be > 0");
    if (jpeg_quality < 1 || jpeg_quality > 100) throw ConfigError("jpeg_quality must be in [1,100]");
    if (config_id && (*config_id < 1 || *config_id > 4))
        throw ConfigError("config_id must be in 1..4");
    if (config_id) {
        const PipelineConfig preset = pipeline_config_preset(*config_id);
        if (preset.backend_order != backend_order)
            throw ConfigError("backend_order does not match preset " + std::to_string(*config_id));
    }
}

std::string PipelineConfig::to_json() const {
    json j;
    j["backend_order"] = json::array();
    for (Stage s : backend_order) j["backend_order"].push_back(stage_name(s));
    j["denoise_strength"] = denoise_strength;
    j["sharpen_amount"] = sharpen_amount;
    j["sharpen_radius"] = sharpen_radius;
    j["jpeg_quality"] = jpeg_quality;
    if (config_id) j["config_id"] = *config_id;
    return j.dump();
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("pipeline config: ") + e.what());
    }
    PipelineConfig cfg;
    try {
        if (j.contains("config_id")) {
            cfg = pipeline_config_preset(j.at("config_id").get<int>());
        }
        if (j.contains("backend_order")) {
            cfg.backend_order.clear();
            for (const auto& s : j.at("backend_order"))
                cfg.backend_order.push_back(stage_from_name(s.get<std::string>()));
        }
        if (j.contains("denoise_strength")) cfg.denoise_strength = j.at("denoise_strength").get<float>();
        if (j.contains("sharpen_amount")) cfg.sharpen_amount = j.at("sharpen_amount").get<float>();
        if (j.contains("sharpen_radius")) cfg.sharpen_radius = j.at("sharpen_radius").get<float>();
        if (j.contains("jpeg_quality")) cfg.jpeg_quality = j.at("jpeg_quality").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("pipeline config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig pipeline_config_preset(int id) {
    PipelineConfig cfg;
    switch (id) {
        case 1:
            cfg.backend_order = {Stage::Denoise, Stage::FlareRemoval, Stage::Sharpen,
                                 Stage::Compression};
            break;
        case 2:
            cfg.backend_order = {Stage::Denoise, Stage::Sharpen, Stage::FlareRemoval,
                                 Stage::Compression};
            break;
        case 3:
            cfg.backend_order = {Stage::Denoise, Stage::Sharpen, Stage::Compression,
                                 Stage::FlareRemoval};
            break;
        case 4:
            cfg.backend_order = {Stage::Sharpen, Stage::Compression, Stage::FlareRemoval};
            break;
        default:
            throw ConfigError("pipeline preset id must be in 1..4");
    }
    cfg.config_id = id;
    return cfg;
}

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

template <typename Img>
void record_stage(StageTrace& trace, const std::string& name, const json& params, const Img& img) {
    trace.stages.push_back({name, params.dump(), hex64(digest(img))});
}

} // namespace

std::string StageTrace::to_json() const {
    json j = json::array();
    for (const auto& s : stages) {
        json e;
        e["stage"] = s.name;
        e["params"] = json::parse(s.params);
        e["output_digest"] = s.output_digest;
        j.push_back(e);
    }
    return j.dump(2);
}

PipelineResult run_pipeline(const RawImage& raw, const PipelineConfig& config,
                            const FlareRemover* remover) {
    config.validate();
    if (config.has_stage(Stage::FlareRemoval) && remover == nullptr)
        throw ConfigError("pipeline contains flare_removal but no remover was supplied");

    PipelineResult result;
    StageTrace& trace = result.trace;

    RawMosaic mosaic = black_level_correct(raw);
    record_stage(trace, "black_level_correct",
                 json{{"black_level", raw.black_level}, {"white_level", raw.white_level}}, mosaic);

    mosaic = white_balance(mosaic, raw.wb_gains);
    record_stage(trace, "white_balance", json{{"gains", raw.wb_gains}}, mosaic);

    LinearImage linear = demosaic_bilinear(mosaic);
    record_stage(trace, "demosaic_bilinear", json{{"cfa", cfa_name(raw.cfa)}}, linear);

    linear = color_correct(linear, raw.color_matrix);
    record_stage(trace, "color_correct", json{{"matrix", raw.color_matrix}}, linear);

    EncodedImage img = tone_map(linear);
    record_stage(trace, "tone_map", json{{"transfer", "srgb"}}, img);

    for (Stage s : config.backend_order) {
        switch (s) {
            case Stage::Denoise:
                img = denoise(img, config.denoise_strength);
                record_stage(trace, "denoise", json{{"strength", config.denoise_strength}}, img);
                break;
            case Stage::FlareRemoval: {
                RemovalResult r = remover->remove(img);
                img = std::move(r.clean_estimate);
                record_stage(trace, "flare_removal", json{{"remover", remover->name()}}, img);
                break;
            }
            case Stage::Sharpen:
                img = sharpen_usm(img, config.sharpen_amount, config.sharpen_radius);
                record_stage(trace, "sharpen",
                             json{{"amount", config.sharpen_amount}, {"radius", config.sharpen_radius}},
                             img);
                break;
            case Stage::Compression:
                img = jpeg_roundtrip(img, config.jpeg_quality);
                record_stage(trace, "compression", json{{"quality", config.jpeg_quality}}, img);
                break;
        }
    }
    result.image = std::move(img);
    return result;
}

} // namespace flarekit
