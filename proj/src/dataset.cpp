#include "flarekit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <json.hpp>
#include <sstream>

#include "flarekit/filters.hpp"
#include "flarekit/isp.hpp"
#include "flarekit/util.hpp"

using nlohmann::json;

namespace flarekit {

namespace {

Mask threshold_mask(const EncodedImage& img, float lum_threshold, const Mask* background) {
    if (background && (background->width != img.width || background->height != img.height))
        throw DimensionError("background mask dimensions differ from image");
    Mask m(img.width, img.height, 0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (background && background->at(x, y)) continue;
            const float l = luma601(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
            if (l >= lum_threshold) m.at(x, y) = 1;
        }
    }
    return m;
}

} // namespace

Mask detection_mask(const EncodedImage& img, const DetectParams& params, const Mask* background) {
    Mask m = threshold_mask(img, params.lum_threshold, background);
    if (params.morph_radius > 0) {
        m = open_disk(m, params.morph_radius);
        m = close_disk(m, params.morph_radius);
    }
    return m;
}

std::vector<LightSource> detect_light_sources(const EncodedImage& img, const DetectParams& params,
                                              const Mask* background_mask) {
    const Mask m = detection_mask(img, params, background_mask);
    const int w = m.width, h = m.height;

    std::vector<int> label(size_t(w) * h, -1);
    std::vector<LightSource> sources;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!m.at(x, y) || label[size_t(y) * w + x] >= 0) continue;
            // BFS flood fill, 8-connectivity.
            const int id = int(sources.size());
            std::deque<std::pair<int, int>> q{{x, y}};
            label[size_t(y) * w + x] = id;
            double sum_x = 0, sum_y = 0;
            int area = 0, saturated = 0;
            int x0 = x, x1 = x, y0 = y, y1 = y;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop_front();
                ++area;
                sum_x += cx;
                sum_y += cy;
                x0 = std::min(x0, cx);
                x1 = std::max(x1, cx);
                y0 = std::min(y0, cy);
                y1 = std::max(y1, cy);
                const uint8_t mx =
                    std::max({img.at(cx, cy, 0), img.at(cx, cy, 1), img.at(cx, cy, 2)});
                if (mx == 255) ++saturated;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        if (!m.at(nx, ny) || label[size_t(ny) * w + nx] >= 0) continue;
                        label[size_t(ny) * w + nx] = id;
                        q.emplace_back(nx, ny);
                    }
                }
            }
            LightSource s;
            s.centroid_x = sum_x / area;
            s.centroid_y = sum_y / area;
            s.x0 = x0;
            s.y0 = y0;
            s.x1 = x1;
            s.y1 = y1;
            s.area = area;
            s.saturation_fraction = double(saturated) / area;
            sources.push_back(s);
        }
    }

    sources.erase(std::remove_if(sources.begin(), sources.end(),
                                 [&](const LightSource& s) { return s.area < params.min_area; }),
                  sources.end());
    std::sort(sources.begin(), sources.end(),
              [](const LightSource& a, const LightSource& b) { return a.area > b.area; });
    return sources;
}

std::vector<CropWindow> crop_windows(const std::vector<LightSource>& sources, int patch_size,
                                     int image_width, int image_height) {
    if (patch_size > image_width || patch_size > image_height)
        throw DimensionError("patch size exceeds image dimensions");
    std::vector<CropWindow> windows;
    for (const auto& s : sources) {
        int x0 = int(std::lround(s.centroid_x)) - patch_size / 2;
        int y0 = int(std::lround(s.centroid_y)) - patch_size / 2;
        x0 = std::clamp(x0, 0, image_width - patch_size);
        y0 = std::clamp(y0, 0, image_height - patch_size);
        // Floor to even so raw crops keep their CFA phase.
        x0 &= ~1;
        y0 &= ~1;
        windows.push_back({x0, y0, patch_size});
    }
    return windows;
}

EncodedImage crop(const EncodedImage& img, const CropWindow& w) {
    EncodedImage out(w.size, w.size);
    for (int y = 0; y < w.size; ++y)
        for (int x = 0; x < w.size; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(w.x0 + x, w.y0 + y, c);
    return out;
}

LinearImage crop(const LinearImage& img, const CropWindow& w) {
    LinearImage out(w.size, w.size);
    for (int y = 0; y < w.size; ++y)
        for (int x = 0; x < w.size; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(w.x0 + x, w.y0 + y, c);
    return out;
}

Mask crop(const Mask& m, const CropWindow& w) {
    Mask out(w.size, w.size);
    for (int y = 0; y < w.size; ++y)
        for (int x = 0; x < w.size; ++x) out.at(x, y) = m.at(w.x0 + x, w.y0 + y);
    return out;
}

RawImage crop(const RawImage& raw, const CropWindow& w) {
    if (w.x0 % 2 != 0 || w.y0 % 2 != 0 || w.size % 2 != 0)
        throw CfaPhaseError("raw crops require even origin and size");
    RawImage out = raw;
    out.width = w.size;
    out.height = w.size;
    out.pixels.resize(size_t(w.size) * w.size);
    for (int y = 0; y < w.size; ++y)
        for (int x = 0; x < w.size; ++x) out.at(x, y) = raw.at(w.x0 + x, w.y0 + y);
    return out;
}

FilterDecision quality_filter(const QualityMetrics& q, const FilterThresholds& t) {
    FilterDecision d;
    if (!(q.residual_shift_px <= t.max_residual_px)) {
        d.accepted = false;
        d.reject_reason = "residual_shift_px";
        return d;
    }
    if (q.exposure_ratio < t.exposure_ratio_lo || q.exposure_ratio > t.exposure_ratio_hi) {
        d.accepted = false;
        d.reject_reason = "exposure_ratio";
        return d;
    }
    if (q.flare_coverage < t.coverage_lo || q.flare_coverage > t.coverage_hi) {
        d.accepted = false;
        d.reject_reason = "flare_coverage";
        return d;
    }
    return d;
}

std::string scene_tag_name(SceneTag t) {
    switch (t) {
        case SceneTag::Indoor: return "indoor";
        case SceneTag::OutdoorDay: return "outdoor_day";
        case SceneTag::OutdoorNight: return "outdoor_night";
    }
    return "indoor";
}

SceneTag scene_tag_from_name(const std::string& name) {
    if (name == "indoor") return SceneTag::Indoor;
    if (name == "outdoor_day") return SceneTag::OutdoorDay;
    if (name == "outdoor_night") return SceneTag::OutdoorNight;
    throw ParseError("unknown scene tag: " + name);
}

std::string PairRecord::to_json() const {
    json j;
    j["pair_id"] = pair_id;
    j["flare_kind"] = flare_kind;
    j["scene_tag"] = scene_tag_name(scene_tag);
    j["device_tag"] = device_tag;
    j["patch_size"] = patch_size;
    j["paths"] = {{"raw_corrupted", paths.raw_corrupted},
                  {"raw_clean", paths.raw_clean},
                  {"rgb_corrupted", paths.rgb_corrupted},
                  {"rgb_clean", paths.rgb_clean}};
    if (!paths.flare_layer.empty()) j["paths"]["flare_layer"] = paths.flare_layer;
    if (std::holds_alternative<Translation>(registration))
        j["registration"] = json::parse(std::get<Translation>(registration).to_json());
    else
        j["registration"] = json::parse(std::get<Homography>(registration).to_json());
    j["quality"] = {{"residual_shift_px", quality.residual_shift_px},
                    {"exposure_ratio", quality.exposure_ratio},
                    {"flare_coverage", quality.flare_coverage}};
    j["accepted"] = accepted;
    if (!accepted) j["reject_reason"] = reject_reason;
    return j.dump();
}

PairRecord PairRecord::from_json(const std::string& text) {
    PairRecord r;
    try {
        const json j = json::parse(text);
        r.pair_id = j.at("pair_id").get<std::string>();
        r.flare_kind = j.at("flare_kind").get<std::string>();
        if (r.flare_kind != "scattering" && r.flare_kind != "reflective")
            throw ParseError("unknown flare_kind: " + r.flare_kind);
        r.scene_tag = scene_tag_from_name(j.at("scene_tag").get<std::string>());
        r.device_tag = j.value("device_tag", "");
        r.patch_size = j.at("patch_size").get<int>();
        const auto& p = j.at("paths");
        r.paths.raw_corrupted = p.at("raw_corrupted").get<std::string>();
        r.paths.raw_clean = p.at("raw_clean").get<std::string>();
        r.paths.rgb_corrupted = p.at("rgb_corrupted").get<std::string>();
        r.paths.rgb_clean = p.at("rgb_clean").get<std::string>();
        r.paths.flare_layer = p.value("flare_layer", "");
        const auto& reg = j.at("registration");
        if (reg.at("type").get<std::string>() == "homography")
            r.registration = Homography::from_json(reg.dump());
        else
            r.registration = Translation::from_json(reg.dump());
        const auto& q = j.at("quality");
        r.quality.residual_shift_px = q.at("residual_shift_px").get<double>();
        r.quality.exposure_ratio = q.at("exposure_ratio").get<double>();
        r.quality.flare_coverage = q.at("flare_coverage").get<double>();
        r.accepted = j.at("accepted").get<bool>();
        r.reject_reason = j.value("reject_reason", "");
    } catch (const json::exception& e) {
        throw ParseError(std::string("pair record: ") + e.what());
    }
    return r;
}

ManifestStats DatasetManifest::stats() const {
    ManifestStats s;
    for (const auto& r : records) {
        if (!r.accepted) continue;
        const int row = int(r.scene_tag);
        const int col = r.flare_kind == "scattering" ? 0 : 1;
        ++s.counts[row][col];
        if (col == 0)
            ++s.total_scattering;
        else
            ++s.total_reflective;
    }
    return s;
}

void manifest_write(const std::string& path, const DatasetManifest& manifest) {
    DatasetManifest sorted = manifest;
    std::sort(sorted.records.begin(), sorted.records.end(),
              [](const PairRecord& a, const PairRecord& b) { return a.pair_id < b.pair_id; });
    std::ostringstream out;
    for (const auto& r : sorted.records) out << r.to_json() << "\n";
    const ManifestStats s = sorted.stats();
    json footer;
    footer["stats"] = {
        {"indoor", {{"scattering", s.counts[0][0]}, {"reflective", s.counts[0][1]}}},
        {"outdoor_day", {{"scattering", s.counts[1][0]}, {"reflective", s.counts[1][1]}}},
        {"outdoor_night", {{"scattering", s.counts[2][0]}, {"reflective", s.counts[2][1]}}},
        {"total", {{"scattering", s.total_scattering}, {"reflective", s.total_reflective}}}};
    out << footer.dump() << "\n";
    write_text_file(path, out.str());
}

DatasetManifest manifest_read(const std::string& path) {
    const std::string text = read_text_file(path);
    DatasetManifest manifest;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool saw_footer = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (j.contains("stats")) {
            saw_footer = true;
            ManifestStats expect;
            try {
                const auto& s = j.at("stats");
                expect.counts[0][0] = s.at("indoor").at("scattering").get<int>();
                expect.counts[0][1] = s.at("indoor").at("reflective").get<int>();
                expect.counts[1][0] = s.at("outdoor_day").at("scattering").get<int>();
                expect.counts[1][1] = s.at("outdoor_day").at("reflective").get<int>();
                expect.counts[2][0] = s.at("outdoor_night").at("scattering").get<int>();
                expect.counts[2][1] = s.at("outdoor_night").at("reflective").get<int>();
                expect.total_scattering = s.at("total").at("scattering").get<int>();
                expect.total_reflective = s.at("total").at("reflective").get<int>();
            } catch (const json::exception& e) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": stats footer: " +
                                 e.what());
            }
            const ManifestStats got = manifest.stats();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 2; ++c)
                    if (got.counts[r][c] != expect.counts[r][c])
                        throw ParseError(path + ":" + std::to_string(line_no) +
                                         ": stats footer disagrees with records");
            if (got.total_scattering != expect.total_scattering ||
                got.total_reflective != expect.total_reflective)
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": stats totals disagree with records");
            continue;
        }
        try {
            manifest.records.push_back(PairRecord::from_json(line));
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!manifest.records.empty() && !saw_footer)
        throw ParseError(path + ": missing stats footer");
    return manifest;
}

std::string render_stats(const ManifestStats& s) {
    std::ostringstream out;
    char buf[128];
    out << "Data               Scattering  Reflective\n";
    const char* rows[3] = {"Indoor", "Outdoor daytime", "Outdoor nighttime"};
    for (int r = 0; r < 3; ++r) {
        std::snprintf(buf, sizeof(buf), "%-18s %10d  %10d\n", rows[r], s.counts[r][0],
                      s.counts[r][1]);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-18s %10d  %10d\n", "Total number", s.total_scattering,
                  s.total_reflective);
    out << buf;
    return out.str();
}

std::array<double, 2> optical_center(int width, int height) {
    return {double(width) / 2.0, double(height) / 2.0};
}

namespace {

// Median luminance over masked-in pixels.
double median_luma(const EncodedImage& img, const Mask& include) {
    std::vector<float> values;
    values.reserve(include.count());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (include.at(x, y))
                values.push_back(luma601(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)));
    if (values.empty()) return 0.0;
    return percentile(std::move(values), 50.0);
}

ReflectiveProduct build_one_direction(const EncodedImage& target, const EncodedImage& partner,
                                      const ReflectiveBuildParams& params) {
    ReflectiveProduct out;
    out.h = estimate_homography(target, partner, params.homography);

    const WarpedEncoded aligned = warp(partner, out.h);
    const int w = target.width, h = target.height;

    // |target - warp(partner)|, 3x3 median, threshold.
    std::vector<float> diff(size_t(w) * h, 0.f), diff_med(size_t(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!aligned.valid.at(x, y)) continue;
            float d = 0.f;
            for (int c = 0; c < 3; ++c)
                d = std::max(d, std::abs(float(target.at(x, y, c)) -
                                         float(aligned.image.at(x, y, c))));
            diff[size_t(y) * w + x] = d;
        }
    }
    median3x3_plane(diff.data(), diff_med.data(), w, h);

    Mask raw_mask(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (aligned.valid.at(x, y) && diff_med[size_t(y) * w + x] > params.diff_threshold)
                raw_mask.at(x, y) = 1;

    // Restrict to regions point-symmetric to the detected sources: the ghost
    // of a source at p can only sit at 2*center - p.
    const auto sources = detect_light_sources(target, params.detect);
    const auto center = optical_center(w, h);
    Mask allowed(w, h, 0);
    for (const auto& s : sources) {
        const double gx = 2.0 * center[0] - s.centroid_x;
        const double gy = 2.0 * center[1] - s.centroid_y;
        const double radius =
            1.5 * std::sqrt(double(s.area) / 3.14159265358979323846) + params.symmetric_margin;
        const int x0 = std::max(0, int(gx - radius)), x1 = std::min(w - 1, int(gx + radius));
        const int y0 = std::max(0, int(gy - radius)), y1 = std::min(h - 1, int(gy + radius));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if ((x - gx) * (x - gx) + (y - gy) * (y - gy) <= radius * radius)
                    allowed.at(x, y) = 1;
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!allowed.at(x, y)) raw_mask.at(x, y) = 0;

    Mask mask = open_disk(raw_mask, 2);
    mask = close_disk(mask, 4);

    const double coverage_frame = double(mask.count()) / (double(w) * h);
    if (coverage_frame > params.max_mask_fraction) {
        out.rejected = true;
        out.reject_reason = "flare_coverage";
        out.flare_mask = std::move(mask);
        out.ground_truth = target;
        return out;
    }

    // Feathered merge: pure partner samples inside the mask, linear ramp to
    // the target over feather_px.
    const auto dist = mask_distance(mask, params.feather_px + 1);
    EncodedImage gt = target;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int d = dist[size_t(y) * w + x];
            if (d > params.feather_px || !aligned.valid.at(x, y)) continue;
            const float alpha = 1.0f - float(d) / float(params.feather_px + 1);
            for (int c = 0; c < 3; ++c) {
                const float v = alpha * float(aligned.image.at(x, y, c)) +
                                (1.f - alpha) * float(target.at(x, y, c));
                gt.at(x, y, c) = uint8_t(std::lround(v));
            }
        }
    }

    // Quality: registration residual, exposure ratio outside the mask,
    // coverage of the flare mask.
    Mask outside(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (aligned.valid.at(x, y) && !mask.at(x, y) && !allowed.at(x, y))
                outside.at(x, y) = 1;
    const double med_target = median_luma(target, outside);
    const double med_partner = median_luma(aligned.image, outside);
    out.quality.residual_shift_px = out.h.reprojection_rms;
    out.quality.exposure_ratio = med_partner > 1e-9 ? med_target / med_partner : 0.0;
    out.quality.flare_coverage = coverage_frame;
    out.ground_truth = std::move(gt);
    out.flare_mask = std::move(mask);
    return out;
}

} // namespace

std::array<ReflectiveProduct, 2> build_reflective_pairs(const EncodedImage& img_a,
                                                        const EncodedImage& img_b,
                                                        const ReflectiveBuildParams& params) {
    if (!img_a.same_size(img_b))
        throw DimensionError("build_reflective_pairs: image dimensions differ");
    return {build_one_direction(img_a, img_b, params),
            build_one_direction(img_b, img_a, params)};
}

} // namespace flarekit
