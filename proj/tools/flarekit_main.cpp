// flarekit: synthesis, ISP runs, dataset building, ablation and evaluation
// for the raw-image flare toolchain.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "flarekit/ablation.hpp"
#include "flarekit/dataset.hpp"
#include "flarekit/filters.hpp"
#include "flarekit/flare_removal.hpp"
#include "flarekit/flare_sim.hpp"
#include "flarekit/image_io.hpp"
#include "flarekit/isp.hpp"
#include "flarekit/metrics.hpp"
#include "flarekit/registration.hpp"
#include "flarekit/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flarekit;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string file_digest(const std::string& path) {
    const auto bytes = read_binary_file(path);
    return fnv64_hex(bytes.data(), bytes.size());
}

// Machine-readable provenance next to every command's outputs.
void write_run_record(const std::string& path, const std::string& command,
                      const std::vector<std::string>& argv, uint64_t seed,
                      const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) {
    json j;
    j["tool"] = "flarekit";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["seed"] = seed;
    j["inputs"] = json::object();
    for (const auto& p : inputs) j["inputs"][p] = file_digest(p);
    j["outputs"] = json::object();
    for (const auto& p : outputs) j["outputs"][p] = file_digest(p);
    write_text_file(path, j.dump(2) + "\n");
}

RawMetadata default_metadata() {
    RawMetadata meta;
    meta.cfa = Cfa::RGGB;
    meta.bit_depth = 12;
    meta.black_level = {64, 64, 64, 64};
    meta.white_level = 4095;
    // Gains near unity: the front-end has no highlight reconstruction, so
    // stronger gains would turn clipped sources magenta and break the 0.95
    // luminance detector.
    meta.wb_gains = {1.12f, 1.0f, 1.06f};
    meta.color_matrix = {1.45f, -0.35f, -0.10f, -0.25f, 1.45f, -0.20f, -0.05f, -0.45f, 1.50f};
    return meta;
}

EncodedImage raw2rgb(const RawImage& raw) {
    PipelineConfig cfg; // empty back-end: pure RAW2RGB
    return run_pipeline(raw, cfg).image;
}

SceneTag pick_scene_tag(Rng& rng, FlareKind kind) {
    // Night scenes dominate both corpora; daytime only occurs for reflective.
    const double u = rng.uniform();
    if (kind == FlareKind::Scattering) return u < 0.35 ? SceneTag::Indoor : SceneTag::OutdoorNight;
    if (u < 0.08) return SceneTag::Indoor;
    return u < 0.65 ? SceneTag::OutdoorDay : SceneTag::OutdoorNight;
}

SceneSpec random_scene(Rng& rng, int size, SceneTag tag, int n_sources, float center_margin) {
    SceneSpec spec;
    spec.width = size;
    spec.height = size;
    spec.seed = rng.next_u64();
    spec.background_low = 0.004f;
    spec.background_high = tag == SceneTag::OutdoorNight  ? 0.18f
                           : tag == SceneTag::OutdoorDay ? 0.45f
                                                         : 0.32f;
    for (int i = 0; i < n_sources; ++i) {
        SceneSource s;
        s.radius = float(rng.uniform(12.0, 28.0));
        s.intensity = float(rng.uniform(1.5, 4.0));
        const float margin = std::max(center_margin, s.radius + 24.0f);
        s.cx = float(rng.uniform(margin, double(size) - margin));
        s.cy = float(rng.uniform(margin, double(size) - margin));
        spec.sources.push_back(s);
    }
    return spec;
}

FlareSpec random_scattering_spec(Rng& rng, const std::string& severity) {
    FlareSpec spec;
    spec.kind = FlareKind::Scattering;
    spec.seed = rng.next_u64();
    spec.scattering.glare_sigma = float(rng.uniform(8.0, 20.0));
    spec.scattering.glare_gain = float(rng.uniform(0.08, 0.3));
    const int streaks = rng.uniform_int(0, 3);
    spec.scattering.streaks.count = streaks;
    if (streaks > 0) {
        spec.scattering.streaks.angle = float(rng.uniform(0.0, 3.14159265));
        spec.scattering.streaks.length = float(rng.uniform(40.0, 120.0));
        spec.scattering.streaks.gain = float(rng.uniform(0.02, 0.08));
    }
    spec.scattering.veiling =
        severity == "global" ? float(rng.uniform(0.04, 0.15)) : float(rng.uniform(0.0, 0.01));
    return spec;
}

// Source position such that its point mirror stays well inside the frame.
FlareSpec random_reflective_spec(Rng& rng, SceneSpec& scene) {
    FlareSpec spec;
    spec.kind = FlareKind::Reflective;
    spec.seed = rng.next_u64();
    const double cx = scene.width / 2.0 + rng.uniform(-30.0, 30.0);
    const double cy = scene.height / 2.0 + rng.uniform(-30.0, 30.0);
    spec.reflective.center_x = float(cx);
    spec.reflective.center_y = float(cy);
    spec.reflective.ghost_gain = float(rng.uniform(0.15, 0.5));
    spec.reflective.defocus_radius = rng.uniform() < 0.5 ? 0.f : float(rng.uniform(3.0, 10.0));

    // Re-place the sources on a ring around the optical center. Ghosts of
    // small sources would fall under the coverage floor, so reflective
    // scenes use larger disks.
    for (auto& s : scene.sources) {
        s.radius = float(rng.uniform(22.0, 34.0));
        const double margin = 80.0 + s.radius;
        for (int attempt = 0; attempt < 64; ++attempt) {
            const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979);
            const double rad = rng.uniform(130.0, 0.45 * scene.width);
            const double sx = cx + rad * std::cos(ang);
            const double sy = cy + rad * std::sin(ang);
            const double gx = 2.0 * cx - sx, gy = 2.0 * cy - sy;
            if (sx < margin || sx > scene.width - margin || sy < margin ||
                sy > scene.height - margin)
                continue;
            if (gx < margin || gx > scene.width - margin || gy < margin ||
                gy > scene.height - margin)
                continue;
            s.cx = float(sx);
            s.cy = float(sy);
            break;
        }
    }
    return spec;
}

double flare_coverage_of_layer(const LinearImage& layer) {
    std::vector<float> mx(size_t(layer.width) * layer.height);
    for (int y = 0; y < layer.height; ++y)
        for (int x = 0; x < layer.width; ++x)
            mx[size_t(y) * layer.width + x] =
                std::max({layer.at(x, y, 0), layer.at(x, y, 1), layer.at(x, y, 2)});
    // Local structure above the global floor, so pure veiling does not count.
    const float floor = percentile(mx, 5.0);
    size_t n = 0;
    for (float v : mx) n += (v - floor > 0.01f);
    return double(n) / double(mx.size());
}

struct SynthOptions {
    FlareKind kind = FlareKind::Scattering;
    int count = 0;
    std::string out_dir;
    uint64_t seed = 0;
    std::string severity = "local";
    std::string mode = "pairs"; // pairs | captures
    float noise = 0.f;
    float vibration = 0.f;
    int jobs = 1;
};

int cmd_synth(const SynthOptions& opt, const std::vector<std::string>& argv) {
    fs::create_directories(opt.out_dir);
    const int patch = opt.kind == FlareKind::Scattering ? 512 : 1024;
    const int capture_size = opt.kind == FlareKind::Scattering ? 768 : 1280;

    DatasetManifest manifest;
    std::vector<PairRecord> records(size_t(opt.count));
    std::vector<std::vector<std::string>> outputs(size_t(opt.count));

    parallel_for(size_t(opt.count), opt.jobs, [&](size_t i) {
        Rng rng = Rng(opt.seed).fork(i + 1);
        char id[64];
        std::snprintf(id, sizeof(id), "%s_%04zu", flare_kind_name(opt.kind).c_str(), i);
        const SceneTag tag = pick_scene_tag(rng, opt.kind);

        if (opt.mode == "pairs") {
            const int size = patch;
            SceneSpec scene = random_scene(rng, size, tag, rng.uniform_int(1, 3), 60.f);
            FlareSpec fspec;
            FlarePair pair;
            if (opt.kind == FlareKind::Scattering) {
                fspec = random_scattering_spec(rng, opt.severity);
                pair = apply_scattering_flare(synth_scene(scene), fspec);
            } else {
                fspec = random_reflective_spec(rng, scene);
                pair = apply_reflective_flare(synth_scene(scene), fspec);
            }

            const RawMetadata meta = default_metadata();
            RawImage raw_corr = remosaic(pair.corrupted, meta);
            RawImage raw_clean = remosaic(pair.clean, meta);
            if (opt.noise > 0.f) {
                raw_corr = add_sensor_noise(raw_corr, opt.noise, rng.next_u64());
                raw_clean = add_sensor_noise(raw_clean, opt.noise, rng.next_u64());
            }

            const fs::path dir = fs::path(opt.out_dir) / flare_kind_name(opt.kind) / id;
            fs::create_directories(dir);
            auto put = [&](const std::string& name) { return (dir / name).string(); };

            save_raw(put("raw_corrupted.pgm"), raw_corr);
            save_raw(put("raw_clean.pgm"), raw_clean);
            save_png(put("rgb_corrupted.png"), raw2rgb(raw_corr));
            save_png(put("rgb_clean.png"), raw2rgb(raw_clean));
            save_pfm(put("flare_layer.pfm"), pair.flare_layer);
            write_text_file(put("scene.json"), scene.to_json() + "\n");
            write_text_file(put("flare.json"), fspec.to_json() + "\n");

            PairRecord rec;
            rec.pair_id = id;
            rec.flare_kind = flare_kind_name(opt.kind);
            rec.scene_tag = tag;
            rec.device_tag = "synthetic";
            rec.patch_size = patch;
            const fs::path rel = fs::path(flare_kind_name(opt.kind)) / id;
            rec.paths.raw_corrupted = (rel / "raw_corrupted.pgm").string();
            rec.paths.raw_clean = (rel / "raw_clean.pgm").string();
            rec.paths.rgb_corrupted = (rel / "rgb_corrupted.png").string();
            rec.paths.rgb_clean = (rel / "rgb_clean.png").string();
            rec.paths.flare_layer = (rel / "flare_layer.pfm").string();
            rec.registration = Translation{0.0, 0.0, 0.0}; // frames are co-located by construction
            rec.quality.residual_shift_px = 0.0;
            rec.quality.exposure_ratio = 1.0;
            rec.quality.flare_coverage = flare_coverage_of_layer(pair.flare_layer);
            const FilterDecision d = quality_filter(rec.quality);
            rec.accepted = d.accepted;
            rec.reject_reason = d.reject_reason;
            records[i] = rec;
            for (const auto& n :
                 {"raw_corrupted.pgm", "raw_clean.pgm", "rgb_corrupted.png", "rgb_clean.png",
                  "flare_layer.pfm"})
                outputs[i].push_back((dir / n).string());
            return;
        }

        // captures mode: full-frame inputs for cmd_build.
        const fs::path dir = fs::path(opt.out_dir) / "captures" / id;
        fs::create_directories(dir);
        auto put = [&](const std::string& name) { return (dir / name).string(); };
        const RawMetadata meta = default_metadata();

        if (opt.kind == FlareKind::Scattering) {
            SceneSpec scene = random_scene(rng, capture_size, tag, rng.uniform_int(1, 2), 90.f);
            const FlareSpec fspec = random_scattering_spec(rng, opt.severity);
            const LinearImage clean = synth_scene(scene);
            const FlarePair pair = apply_scattering_flare(clean, fspec);

            // Tripod vibration: the clean capture lands on a slightly shifted grid.
            double vx = 0.0, vy = 0.0;
            if (opt.vibration > 0.f) {
                vx = rng.uniform(-double(opt.vibration), double(opt.vibration));
                vy = rng.uniform(-double(opt.vibration), double(opt.vibration));
            }
            const LinearImage clean_shifted =
                (vx != 0.0 || vy != 0.0) ? resample_shift(clean, vx, vy) : clean;

            RawImage raw_corr = remosaic(pair.corrupted, meta);
            RawImage raw_clean = remosaic(clean_shifted, meta);
            if (opt.noise > 0.f) {
                raw_corr = add_sensor_noise(raw_corr, opt.noise, rng.next_u64());
                raw_clean = add_sensor_noise(raw_clean, opt.noise, rng.next_u64());
            }
            save_raw(put("raw_corrupted.pgm"), raw_corr);
            save_raw(put("raw_clean.pgm"), raw_clean);
            save_pfm(put("flare_layer.pfm"), pair.flare_layer);
            json meta_j;
            meta_j["scene"] = json::parse(scene.to_json());
            meta_j["flare"] = json::parse(fspec.to_json());
            meta_j["vibration"] = {vx, vy};
            meta_j["scene_tag"] = scene_tag_name(tag);
            write_text_file(put("capture.json"), meta_j.dump(2) + "\n");
            outputs[i].push_back(put("raw_corrupted.pgm"));
            outputs[i].push_back(put("raw_clean.pgm"));
        } else {
            SceneSpec scene = random_scene(rng, capture_size, tag, rng.uniform_int(1, 2), 90.f);
            FlareSpec fspec = random_reflective_spec(rng, scene);
            const LinearImage clean_a = synth_scene(scene);
            const FlarePair pair_a = apply_reflective_flare(clean_a, fspec);

            // Camera rotation (pan) between the two captures.
            const double f = 1.4 * capture_size;
            const double theta = rng.uniform(0.035, 0.055) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
            const double tilt = rng.uniform(-0.01, 0.01);
            const double cx = capture_size / 2.0, cy = capture_size / 2.0;
            // x_a = H * x_b for points on the (distant) scene plane.
            Homography h_true;
            {
                const double ct = std::cos(theta), st = std::sin(theta);
                const double cp = std::cos(tilt), sp = std::sin(tilt);
                // K * Rx(tilt) * Ry(theta) * K^-1
                const double r[9] = {ct, 0, st, sp * st, cp, -sp * ct, -cp * st, sp, cp * ct};
                const double k[9] = {f, 0, cx, 0, f, cy, 0, 0, 1};
                const double kinv[9] = {1 / f, 0, -cx / f, 0, 1 / f, -cy / f, 0, 0, 1};
                auto mul = [](const double* a, const double* b, double* out) {
                    for (int ii = 0; ii < 3; ++ii)
                        for (int jj = 0; jj < 3; ++jj) {
                            double acc = 0;
                            for (int kk = 0; kk < 3; ++kk) acc += a[ii * 3 + kk] * b[kk * 3 + jj];
                            out[ii * 3 + jj] = acc;
                        }
                };
                double tmp[9], m[9];
                mul(r, kinv, tmp);
                mul(k, tmp, m);
                const double sc = 1.0 / m[8];
                for (int ii = 0; ii < 9; ++ii) h_true.m[size_t(ii)] = m[ii] * sc;
            }

            // Capture B sees the scene through h_true: B(x) = sceneA(h_true x).
            LinearImage clean_b(capture_size, capture_size);
            for (int y = 0; y < capture_size; ++y) {
                for (int x = 0; x < capture_size; ++x) {
                    const auto p = h_true.apply(double(x), double(y));
                    const double sx = clampf(float(p[0]), 0.f, float(capture_size - 1));
                    const double sy = clampf(float(p[1]), 0.f, float(capture_size - 1));
                    const int ix = std::min(int(sx), capture_size - 2);
                    const int iy = std::min(int(sy), capture_size - 2);
                    const double fx2 = sx - ix, fy2 = sy - iy;
                    for (int c = 0; c < 3; ++c) {
                        const double v =
                            (clean_a.at(ix, iy, c) * (1 - fx2) + clean_a.at(ix + 1, iy, c) * fx2) *
                                (1 - fy2) +
                            (clean_a.at(ix, iy + 1, c) * (1 - fx2) +
                             clean_a.at(ix + 1, iy + 1, c) * fx2) *
                                fy2;
                        clean_b.at(x, y, c) = float(v);
                    }
                }
            }
            const FlarePair pair_b = apply_reflective_flare(clean_b, fspec);

            RawImage raw_a = remosaic(pair_a.corrupted, meta);
            RawImage raw_b = remosaic(pair_b.corrupted, meta);
            if (opt.noise > 0.f) {
                raw_a = add_sensor_noise(raw_a, opt.noise, rng.next_u64());
                raw_b = add_sensor_noise(raw_b, opt.noise, rng.next_u64());
            }
            save_raw(put("raw_a.pgm"), raw_a);
            save_raw(put("raw_b.pgm"), raw_b);
            save_pfm(put("flare_layer_a.pfm"), pair_a.flare_layer);
            save_pfm(put("flare_layer_b.pfm"), pair_b.flare_layer);
            save_pfm(put("clean_a.pfm"), clean_a);
            save_pfm(put("clean_b.pfm"), clean_b);
            json meta_j;
            meta_j["scene"] = json::parse(scene.to_json());
            meta_j["flare"] = json::parse(fspec.to_json());
            meta_j["h_true"] = h_true.m;
            meta_j["scene_tag"] = scene_tag_name(tag);
            write_text_file(put("capture.json"), meta_j.dump(2) + "\n");
            outputs[i].push_back(put("raw_a.pgm"));
            outputs[i].push_back(put("raw_b.pgm"));
        }
    });

    std::vector<std::string> all_outputs;
    if (opt.mode == "pairs") {
        for (auto& r : records) manifest.records.push_back(std::move(r));
        const std::string manifest_path = (fs::path(opt.out_dir) / "manifest.jsonl").string();
        manifest_write(manifest_path, manifest);
        all_outputs.push_back(manifest_path);
    }
    for (const auto& v : outputs)
        for (const auto& p : v) all_outputs.push_back(p);

    write_run_record((fs::path(opt.out_dir) / "run_record.json").string(), "synth", argv, opt.seed,
                     {}, all_outputs);
    std::cerr << "synth: wrote " << opt.count << " " << flare_kind_name(opt.kind) << " "
              << opt.mode << " to " << opt.out_dir << "\n";
    return 0;
}

struct BuildOptions {
    std::string capture_dir;
    FlareKind kind = FlareKind::Scattering;
    std::string out_dir;
    int jobs = 1;
    FilterThresholds filters;
};

int cmd_build(const BuildOptions& opt, const std::vector<std::string>& argv) {
    std::vector<fs::path> captures;
    const fs::path root = fs::path(opt.capture_dir) / "captures";
    if (!fs::is_directory(root)) throw IoError("no captures directory under " + opt.capture_dir);
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) captures.push_back(e.path());
    std::sort(captures.begin(), captures.end());

    fs::create_directories(opt.out_dir);
    std::vector<std::vector<PairRecord>> per_capture(captures.size());

    parallel_for(captures.size(), opt.jobs, [&](size_t ci) {
        const fs::path& cap = captures[ci];
        const std::string cap_name = cap.filename().string();
        json cap_meta = json::parse(read_text_file((cap / "capture.json").string()));
        const SceneTag tag = scene_tag_from_name(cap_meta.value("scene_tag", "indoor"));

        if (opt.kind == FlareKind::Scattering) {
            const RawImage raw_corr = load_raw((cap / "raw_corrupted.pgm").string());
            const RawImage raw_clean = load_raw((cap / "raw_clean.pgm").string());
            const EncodedImage rgb_corr = raw2rgb(raw_corr);
            const EncodedImage rgb_clean = raw2rgb(raw_clean);

            // Vibration: align the clean capture; raw moves on the even grid
            // only, RGB gets the full sub-pixel correction.
            const Translation t = estimate_translation(rgb_corr, rgb_clean);
            const QuantizedShift q = quantize_translation_for_raw(t);
            const ShiftedRaw clean_aligned_raw = shift_raw(raw_clean, -q.ix, -q.iy);
            const EncodedImage clean_aligned_rgb = resample_shift(rgb_clean, -t.dx, -t.dy);
            const Translation residual = estimate_translation(rgb_corr, clean_aligned_rgb);
            const double residual_px = std::hypot(residual.dx, residual.dy);

            const auto sources = detect_light_sources(rgb_corr);
            auto windows = crop_windows(sources, 512, rgb_corr.width, rgb_corr.height);

            // Keep windows inside the valid (non-vacated) region of the
            // shifted raw. Shift components are even, so the clamp keeps the
            // even origin.
            {
                const int sx = -q.ix, sy = -q.iy;
                const int vx0 = std::max(0, sx), vy0 = std::max(0, sy);
                const int vx1 = rgb_corr.width + std::min(0, sx);  // exclusive
                const int vy1 = rgb_corr.height + std::min(0, sy);
                for (auto& win : windows) {
                    if (vx1 - vx0 >= win.size && vy1 - vy0 >= win.size) {
                        win.x0 = std::clamp(win.x0, vx0, vx1 - win.size);
                        win.y0 = std::clamp(win.y0, vy0, vy1 - win.size);
                    }
                }
            }

            const LinearImage lin_corr = linearize(rgb_corr);
            const LinearImage lin_clean = linearize(clean_aligned_rgb);

            for (size_t wi = 0; wi < windows.size(); ++wi) {
                const CropWindow& win = windows[wi];
                char pair_id[96];
                std::snprintf(pair_id, sizeof(pair_id), "sc_%s_%02zu", cap_name.c_str(), wi);

                PairRecord rec;
                rec.pair_id = pair_id;
                rec.flare_kind = "scattering";
                rec.scene_tag = tag;
                rec.device_tag = "synthetic";
                rec.patch_size = 512;
                rec.registration = t;
                rec.quality.residual_shift_px = residual_px;

                // Raw patches must not include the vacated border.
                bool raw_ok = true;
                for (int y = win.y0; y < win.y0 + win.size && raw_ok; ++y)
                    for (int x = win.x0; x < win.x0 + win.size; ++x)
                        if (!clean_aligned_raw.valid.at(x, y)) {
                            raw_ok = false;
                            break;
                        }

                // Exposure ratio and coverage from the linear difference.
                // Flare is low-frequency and non-negative, so the signed
                // channel-mean difference is smoothed first; sensor noise and
                // resampling jitter average out without rectification bias.
                std::vector<float> diff_raw(size_t(win.size) * win.size);
                for (int y = 0; y < win.size; ++y)
                    for (int x = 0; x < win.size; ++x) {
                        float d = 0.f;
                        for (int c = 0; c < 3; ++c)
                            d += lin_corr.at(win.x0 + x, win.y0 + y, c) -
                                 lin_clean.at(win.x0 + x, win.y0 + y, c);
                        diff_raw[size_t(y) * win.size + x] = d / 3.f;
                    }
                std::vector<float> diff(size_t(win.size) * win.size);
                gaussian_blur_plane(diff_raw.data(), diff.data(), win.size, win.size, 2.0f);
                const float floor = std::max(percentile(diff, 5.0), 0.f);
                size_t covered = 0;
                std::vector<float> luma_c, luma_g, clean_all;
                clean_all.reserve(size_t(win.size) * win.size);
                for (int y = 0; y < win.size; ++y)
                    for (int x = 0; x < win.size; ++x)
                        clean_all.push_back(luma601(lin_clean.at(win.x0 + x, win.y0 + y, 0),
                                                    lin_clean.at(win.x0 + x, win.y0 + y, 1),
                                                    lin_clean.at(win.x0 + x, win.y0 + y, 2)));
                // Exposure is judged on the brighter scene content: a true
                // exposure mismatch is multiplicative and shows there, while
                // sub-threshold flare tails are additive and do not.
                const float bright_gate = percentile(clean_all, 60.0);
                for (int y = 0; y < win.size; ++y)
                    for (int x = 0; x < win.size; ++x) {
                        const bool flared = diff[size_t(y) * win.size + x] - floor > 0.01f;
                        covered += flared;
                        const float lg = clean_all[size_t(y) * win.size + x];
                        if (!flared && lg >= bright_gate) {
                            const float lc =
                                luma601(lin_corr.at(win.x0 + x, win.y0 + y, 0),
                                        lin_corr.at(win.x0 + x, win.y0 + y, 1),
                                        lin_corr.at(win.x0 + x, win.y0 + y, 2));
                            // Net of the global flare floor, so veiling does
                            // not read as an exposure change.
                            luma_c.push_back(std::max(lc - floor, 0.f));
                            luma_g.push_back(lg);
                        }
                    }
                rec.quality.flare_coverage = double(covered) / (double(win.size) * win.size);
                const double med_g = luma_g.empty() ? 0.0 : percentile(luma_g, 50.0);
                rec.quality.exposure_ratio =
                    med_g > 1e-9 ? percentile(luma_c, 50.0) / med_g : 0.0;

                if (!raw_ok) {
                    rec.accepted = false;
                    rec.reject_reason = "raw_border";
                } else {
                    const FilterDecision d = quality_filter(rec.quality, opt.filters);
                    rec.accepted = d.accepted;
                    rec.reject_reason = d.reject_reason;
                }

                if (rec.accepted) {
                    const fs::path dir = fs::path(opt.out_dir) / "scattering" / pair_id;
                    fs::create_directories(dir);
                    const fs::path rel = fs::path("scattering") / pair_id;
                    save_raw((dir / "raw_corrupted.pgm").string(), crop(raw_corr, win));
                    save_raw((dir / "raw_clean.pgm").string(), crop(clean_aligned_raw.raw, win));
                    save_png((dir / "rgb_corrupted.png").string(), crop(rgb_corr, win));
                    save_png((dir / "rgb_clean.png").string(), crop(clean_aligned_rgb, win));
                    rec.paths.raw_corrupted = (rel / "raw_corrupted.pgm").string();
                    rec.paths.raw_clean = (rel / "raw_clean.pgm").string();
                    rec.paths.rgb_corrupted = (rel / "rgb_corrupted.png").string();
                    rec.paths.rgb_clean = (rel / "rgb_clean.png").string();
                    // Truth layer from synthesis, when present, cropped for
                    // oracle-based ablations.
                    const fs::path truth = cap / "flare_layer.pfm";
                    if (fs::exists(truth)) {
                        save_pfm((dir / "flare_layer.pfm").string(),
                                 crop(load_pfm(truth.string()), win));
                        rec.paths.flare_layer = (rel / "flare_layer.pfm").string();
                    }
                }
                per_capture[ci].push_back(std::move(rec));
            }
            return;
        }

        // Reflective: build both directions from the rotation pair.
        const RawImage raw_a = load_raw((cap / "raw_a.pgm").string());
        const RawImage raw_b = load_raw((cap / "raw_b.pgm").string());
        const EncodedImage rgb_a = raw2rgb(raw_a);
        const EncodedImage rgb_b = raw2rgb(raw_b);
        const auto products = build_reflective_pairs(rgb_a, rgb_b);

        for (int dir_i = 0; dir_i < 2; ++dir_i) {
            const ReflectiveProduct& prod = products[size_t(dir_i)];
            const EncodedImage& target_rgb = dir_i == 0 ? rgb_a : rgb_b;
            const RawImage& target_raw = dir_i == 0 ? raw_a : raw_b;
            const RawImage& partner_raw = dir_i == 0 ? raw_b : raw_a;

            char pair_id[96];
            std::snprintf(pair_id, sizeof(pair_id), "rf_%s_%c", cap_name.c_str(),
                          dir_i == 0 ? 'a' : 'b');
            PairRecord rec;
            rec.pair_id = pair_id;
            rec.flare_kind = "reflective";
            rec.scene_tag = tag;
            rec.device_tag = "synthetic";
            rec.patch_size = 1024;
            rec.registration = prod.h;
            rec.quality = prod.quality;

            if (prod.rejected || prod.flare_mask.count() == 0) {
                rec.accepted = false;
                rec.reject_reason = prod.rejected ? prod.reject_reason : "flare_coverage";
                per_capture[ci].push_back(std::move(rec));
                continue;
            }

            // Patch centered on the recovered flare; coverage is reported
            // against the patch the record actually ships.
            double mx = 0, my = 0;
            size_t n = 0;
            for (int y = 0; y < prod.flare_mask.height; ++y)
                for (int x = 0; x < prod.flare_mask.width; ++x)
                    if (prod.flare_mask.at(x, y)) {
                        mx += x;
                        my += y;
                        ++n;
                    }
            LightSource pseudo;
            pseudo.centroid_x = mx / double(n);
            pseudo.centroid_y = my / double(n);
            const auto windows = crop_windows({pseudo}, 1024, target_rgb.width, target_rgb.height);
            const CropWindow& win = windows[0];
            const Mask mask_patch = crop(prod.flare_mask, win);
            rec.quality.flare_coverage =
                double(mask_patch.count()) / (double(win.size) * win.size);
            {
                const FilterDecision d = quality_filter(rec.quality, opt.filters);
                rec.accepted = d.accepted;
                rec.reject_reason = d.reject_reason;
            }

            if (rec.accepted) {

                const fs::path out_dir = fs::path(opt.out_dir) / "reflective" / pair_id;
                fs::create_directories(out_dir);
                const fs::path rel = fs::path("reflective") / pair_id;
                save_raw((out_dir / "raw_corrupted.pgm").string(), crop(target_raw, win));
                // Raw is never warped; the partner raw ships unaligned with
                // the homography in the record.
                save_raw((out_dir / "raw_clean.pgm").string(), crop(partner_raw, win));
                save_png((out_dir / "rgb_corrupted.png").string(), crop(target_rgb, win));
                save_png((out_dir / "rgb_clean.png").string(), crop(prod.ground_truth, win));
                rec.paths.raw_corrupted = (rel / "raw_corrupted.pgm").string();
                rec.paths.raw_clean = (rel / "raw_clean.pgm").string();
                rec.paths.rgb_corrupted = (rel / "rgb_corrupted.png").string();
                rec.paths.rgb_clean = (rel / "rgb_clean.png").string();
            }
            per_capture[ci].push_back(std::move(rec));
        }
    });

    DatasetManifest manifest;
    for (auto& v : per_capture)
        for (auto& r : v) manifest.records.push_back(std::move(r));
    const std::string manifest_path = (fs::path(opt.out_dir) / "manifest.jsonl").string();
    manifest_write(manifest_path, manifest);
    write_run_record((fs::path(opt.out_dir) / "run_record.json").string(), "build", argv, 0, {},
                     {manifest_path});

    const ManifestStats stats = manifest.stats();
    std::cerr << "build: " << manifest.records.size() << " records, "
              << (stats.total_scattering + stats.total_reflective) << " accepted\n"
              << render_stats(stats);
    return 0;
}

struct AblateOptions {
    std::string manifest_path;
    std::vector<int> orderings;
    bool table = false;
    RemoverKind remover = RemoverKind::Baseline;
    uint64_t seed = 0;
    std::string out_dir;
    int jobs = 1;
    size_t max_pairs = 0;
    StageParams stages;
};

int cmd_ablate(const AblateOptions& opt, const std::vector<std::string>& argv) {
    const DatasetManifest manifest = manifest_read(opt.manifest_path);
    AblationOptions options;
    options.stages = opt.stages;
    options.remover = opt.remover;
    options.seed = opt.seed;
    options.jobs = opt.jobs;
    options.max_pairs = opt.max_pairs;
    options.manifest_dir = fs::path(opt.manifest_path).parent_path().string();

    const auto rows = opt.table ? table_rows() : rows_from_orderings(opt.orderings);
    const MetricReport report = run_ablation(manifest, rows, options);

    fs::create_directories(opt.out_dir);
    const std::string txt = (fs::path(opt.out_dir) / "report.txt").string();
    const std::string csv = (fs::path(opt.out_dir) / "report.csv").string();
    write_text_file(txt, render_report_text(report));
    write_text_file(csv, render_report_csv(report));
    write_run_record((fs::path(opt.out_dir) / "run_record.json").string(), "ablate", argv,
                     opt.seed, {opt.manifest_path}, {txt, csv});
    std::cerr << render_report_text(report);
    return 0;
}

struct IspOptions {
    std::string raw_path;
    std::string config_path;
    std::string remover = "identity";
    std::string flare_layer_path;
    std::string out_path;
    std::string trace_path;
};

int cmd_isp(const IspOptions& opt, const std::vector<std::string>& argv) {
    const RawImage raw = load_raw(opt.raw_path);
    PipelineConfig cfg;
    if (!opt.config_path.empty()) cfg = PipelineConfig::from_json(read_text_file(opt.config_path));

    std::unique_ptr<FlareRemover> remover;
    if (cfg.has_stage(Stage::FlareRemoval)) {
        switch (remover_kind_from_name(opt.remover)) {
            case RemoverKind::Identity:
                remover = std::make_unique<IdentityRemover>();
                break;
            case RemoverKind::Baseline:
                remover = std::make_unique<BaselineRemover>();
                break;
            case RemoverKind::Oracle:
                if (opt.flare_layer_path.empty())
                    throw ConfigError("oracle remover needs --flare-layer");
                remover = std::make_unique<OracleRemover>(load_pfm(opt.flare_layer_path));
                break;
        }
    }

    const PipelineResult result = run_pipeline(raw, cfg, remover.get());
    save_png(opt.out_path, result.image);
    const std::string trace =
        opt.trace_path.empty() ? opt.out_path + ".trace.json" : opt.trace_path;
    write_text_file(trace, result.trace.to_json() + "\n");
    write_run_record(opt.out_path + ".run.json", "isp", argv, 0,
                     {opt.raw_path, raw_sidecar_path(opt.raw_path)}, {opt.out_path, trace});
    std::cerr << "isp: wrote " << opt.out_path << " (" << result.trace.stages.size()
              << " stages)\n";
    return 0;
}

struct EvalOptions {
    std::string pairs_path;
    std::string metrics = "psnr,ssim";
    std::string out_path;
};

int cmd_eval(const EvalOptions& opt, const std::vector<std::string>& argv) {
    const bool want_psnr = opt.metrics.find("psnr") != std::string::npos;
    const bool want_ssim = opt.metrics.find("ssim") != std::string::npos;
    if (!want_psnr && !want_ssim) throw ConfigError("no known metrics in --metrics");

    std::istringstream in(read_text_file(opt.pairs_path));
    std::ostringstream out;
    out << "a,b";
    if (want_psnr) out << ",psnr_db";
    if (want_ssim) out << ",ssim";
    out << "\n";
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(opt.pairs_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const std::string pa = j.at("a").get<std::string>();
        const std::string pb = j.at("b").get<std::string>();
        const EncodedImage a = load_encoded(pa);
        const EncodedImage b = load_encoded(pb);
        out << pa << ',' << pb;
        if (want_psnr) {
            const double v = psnr(a, b);
            char buf[64];
            if (std::isinf(v))
                std::snprintf(buf, sizeof(buf), "inf");
            else
                std::snprintf(buf, sizeof(buf), "%.4f", v);
            out << ',' << buf;
        }
        if (want_ssim) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", ssim(a, b));
            out << ',' << buf;
        }
        out << "\n";
    }
    write_text_file(opt.out_path, out.str());
    write_run_record(opt.out_path + ".run.json", "eval", argv, 0, {opt.pairs_path},
                     {opt.out_path});
    std::cerr << "eval: wrote " << opt.out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);

    CLI::App app{"raw-image flare toolchain"};
    app.require_subcommand(1);

    SynthOptions synth;
    BuildOptions build;
    AblateOptions ablate;
    IspOptions isp;
    EvalOptions eval;
    std::string synth_kind = "scattering", build_kind = "scattering";
    std::string ablate_remover = "baseline", orderings_csv = "1,2,3,4";
    const int env_jobs = default_jobs();

    auto* s = app.add_subcommand("synth", "generate synthetic flare pairs or captures");
    s->add_option("--kind", synth_kind, "scattering|reflective")
        ->check(CLI::IsMember({"scattering", "reflective"}));
    s->add_option("--count", synth.count, "number of pairs/captures")->required();
    s->add_option("--out", synth.out_dir, "output directory")->required();
    s->add_option("--seed", synth.seed, "random seed");
    s->add_option("--severity", synth.severity, "local|global scattering degradation")
        ->check(CLI::IsMember({"local", "global"}));
    s->add_option("--mode", synth.mode, "pairs|captures")
        ->check(CLI::IsMember({"pairs", "captures"}));
    s->add_option("--noise", synth.noise, "sensor noise sigma as fraction of full scale");
    s->add_option("--vibration", synth.vibration, "max tripod vibration in px (captures mode)");
    s->add_option("--jobs", synth.jobs, "parallel workers")->default_val(env_jobs);

    auto* b = app.add_subcommand("build", "build a dataset from captures");
    b->add_option("--capture-dir", build.capture_dir, "directory with captures/")->required();
    b->add_option("--kind", build_kind, "scattering|reflective")
        ->check(CLI::IsMember({"scattering", "reflective"}));
    b->add_option("--out", build.out_dir, "output dataset directory")->required();
    b->add_option("--jobs", build.jobs, "parallel workers")->default_val(env_jobs);
    b->add_option("--max-residual", build.filters.max_residual_px, "residual shift gate, px");
    b->add_option("--coverage-max", build.filters.coverage_hi, "flare coverage upper gate");

    auto* a = app.add_subcommand("ablate", "run the pipeline-ordering study");
    a->add_option("--manifest", ablate.manifest_path, "dataset manifest")->required();
    a->add_option("--orderings", orderings_csv, "comma-separated ordering ids (1..4)");
    a->add_flag("--table", ablate.table, "use the cumulative five-row schedule");
    a->add_option("--remover", ablate_remover, "identity|oracle|baseline")
        ->check(CLI::IsMember({"identity", "oracle", "baseline"}));
    a->add_option("--seed", ablate.seed, "seed recorded in the report");
    a->add_option("--out", ablate.out_dir, "output directory")->required();
    a->add_option("--jobs", ablate.jobs, "parallel workers")->default_val(env_jobs);
    a->add_option("--max-pairs", ablate.max_pairs, "limit the number of pairs");
    a->add_option("--denoise-strength", ablate.stages.denoise_strength, "bilateral strength");
    a->add_option("--sharpen-amount", ablate.stages.sharpen_amount, "usm amount");
    a->add_option("--jpeg-quality", ablate.stages.jpeg_quality, "jpeg quality factor");

    auto* i = app.add_subcommand("isp", "develop one raw file");
    i->add_option("--raw", isp.raw_path, "raw .pgm (with .json sidecar)")->required();
    i->add_option("--config", isp.config_path, "pipeline config json");
    i->add_option("--remover", isp.remover, "identity|oracle|baseline")
        ->check(CLI::IsMember({"identity", "oracle", "baseline"}));
    i->add_option("--flare-layer", isp.flare_layer_path, "truth flare pfm for the oracle");
    i->add_option("--out", isp.out_path, "output png")->required();
    i->add_option("--trace", isp.trace_path, "stage trace json path");

    auto* e = app.add_subcommand("eval", "compute metrics over an image-pair list");
    e->add_option("--pairs", eval.pairs_path, "json-lines file with {a,b} paths")->required();
    e->add_option("--metrics", eval.metrics, "comma-separated: psnr,ssim");
    e->add_option("--out", eval.out_path, "output csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err); // --help
        app.exit(err);
        return 2;
    }

    try {
        if (s->parsed()) {
            synth.kind = flare_kind_from_name(synth_kind);
            return cmd_synth(synth, args);
        }
        if (b->parsed()) {
            build.kind = flare_kind_from_name(build_kind);
            return cmd_build(build, args);
        }
        if (a->parsed()) {
            ablate.remover = remover_kind_from_name(ablate_remover);
            if (!ablate.table) {
                std::istringstream ss(orderings_csv);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    try {
                        ablate.orderings.push_back(std::stoi(tok));
                    } catch (const std::exception&) {
                        throw ConfigError("bad ordering id: " + tok);
                    }
                }
            }
            return cmd_ablate(ablate, args);
        }
        if (i->parsed()) return cmd_isp(isp, args);
        if (e->parsed()) return cmd_eval(eval, args);
    } catch (const ParseError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const InvalidMetadataError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const IoError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "processing error: " << ex.what() << "\n";
        return 3;
    }
    return 0;
}
