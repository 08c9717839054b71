// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. argv[1] is the flarekit CLI binary (needed by criterion 9).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "flarekit/ablation.hpp"
#include "flarekit/dataset.hpp"
#include "flarekit/flare_removal.hpp"
#include "flarekit/flare_sim.hpp"
#include "flarekit/image_io.hpp"
#include "flarekit/isp.hpp"
#include "flarekit/metrics.hpp"
#include "flarekit/registration.hpp"
#include "flarekit/util.hpp"
#include "../tests/test_support.hpp"

using namespace flarekit;
using namespace testsupport;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;
std::string g_cli_path;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---- criterion 1: registration accuracy -------------------------------------

void criterion_registration() {
    Rng rng(1001);
    double max_err_clean = 0.0, max_err_noisy = 0.0;
    double total_time = 0.0;
    const int n_pairs = 100;
    for (int i = 0; i < n_pairs; ++i) {
        const EncodedImage ref = textured_image(512, 512, 2000 + uint64_t(i));
        const double tx = rng.uniform(-8.0, 8.0);
        const double ty = rng.uniform(-8.0, 8.0);
        const EncodedImage mov = oracle_resample(ref, tx, ty);

        const auto t0 = Clock::now();
        const Translation t = estimate_translation(ref, mov);
        total_time += seconds_since(t0);
        max_err_clean = std::max(max_err_clean, std::max(std::abs(t.dx - tx), std::abs(t.dy - ty)));

        const EncodedImage ref_n = with_gaussian_noise(ref, 2.55, 3000 + uint64_t(i));
        const EncodedImage mov_n = with_gaussian_noise(mov, 2.55, 4000 + uint64_t(i));
        const Translation tn = estimate_translation(ref_n, mov_n);
        max_err_noisy =
            std::max(max_err_noisy, std::max(std::abs(tn.dx - tx), std::abs(tn.dy - ty)));
    }
    const double per_pair = total_time / n_pairs;
    std::ostringstream d;
    d << "max err " << max_err_clean << " px clean, " << max_err_noisy << " px at 1% noise, "
      << per_pair << " s/pair";
    report(1, "sub-pixel translation accuracy", max_err_clean <= 0.1 && max_err_noisy <= 0.25 &&
                                                    per_pair < 1.0,
           d.str());
}

// ---- criterion 2: CFA-phase safety -------------------------------------------

RawImage textured_raw_512(uint64_t seed) {
    RawImage raw;
    raw.width = 256;
    raw.height = 256;
    raw.cfa = Cfa::RGGB;
    raw.bit_depth = 12;
    raw.black_level = {64, 64, 64, 64};
    raw.white_level = 4095;
    raw.pixels.resize(size_t(256) * 256);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
            raw.pixels[size_t(y) * 256 + x] =
                uint16_t(300 + 3200 * smooth_noise(seed, x * 0.8, y * 0.8));
    return raw;
}

void criterion_cfa_phase() {
    Rng rng(1002);
    double min_psnr = 1e9;
    bool odd_rejected = true;
    for (int i = 0; i < 50; ++i) {
        const RawImage raw = textured_raw_512(5000 + uint64_t(i));
        const int ix = 2 * rng.uniform_int(-8, 8);
        const int iy = 2 * rng.uniform_int(-8, 8);
        const ShiftedRaw shifted = shift_raw(raw, ix, iy);
        const LinearImage a = demosaic_bilinear(black_level_correct(shifted.raw));
        const LinearImage b = demosaic_bilinear(black_level_correct(raw));
        double mse = 0;
        size_t n = 0;
        const int m = 12; // interior margin
        for (int y = m; y < 256 - m; ++y)
            for (int x = m; x < 256 - m; ++x) {
                const int sx = x - ix, sy = y - iy;
                if (sx < m || sx >= 256 - m || sy < m || sy >= 256 - m) continue;
                for (int c = 0; c < 3; ++c) {
                    const double d = double(a.at(x, y, c)) - double(b.at(sx, sy, c));
                    mse += d * d;
                    ++n;
                }
            }
        const double p = 10.0 * std::log10(1.0 / std::max(mse / double(n), 1e-12));
        min_psnr = std::min(min_psnr, p);

        const int odd = 2 * rng.uniform_int(-3, 3) + 1;
        try {
            shift_raw(raw, odd, 0);
            odd_rejected = false;
        } catch (const CfaPhaseError&) {
        }
        try {
            shift_raw(raw, 0, odd);
            odd_rejected = false;
        } catch (const CfaPhaseError&) {
        }
    }
    std::ostringstream d;
    d << "min interior psnr " << min_psnr << " dB over 50 even shifts; odd shifts "
      << (odd_rejected ? "rejected" : "NOT rejected");
    report(2, "CFA-phase safety of raw shifts", min_psnr >= 40.0 && odd_rejected, d.str());
}

// ---- criteria 3+4: reflective builder closure and ghost symmetry -------------

struct RotationFixture {
    EncodedImage a, b;
    EncodedImage clean_a_enc;
    Mask true_ghost_a;
};

RotationFixture make_rotation_fixture(Rng& rng, int n) {
    SceneSpec scene;
    scene.width = n;
    scene.height = n;
    scene.seed = rng.next_u64();
    scene.background_high = 0.3f;
    const double cx = n / 2.0, cy = n / 2.0;
    SceneSource src;
    src.radius = float(rng.uniform(20.0, 30.0));
    src.intensity = float(rng.uniform(2.0, 3.5));
    const double ang = rng.uniform(0.0, 6.283185307);
    const double rad = rng.uniform(0.18 * n, 0.34 * n);
    src.cx = float(cx + rad * std::cos(ang));
    src.cy = float(cy + rad * std::sin(ang));
    scene.sources.push_back(src);

    const LinearImage clean_a = synth_scene(scene);
    FlareSpec spec;
    spec.kind = FlareKind::Reflective;
    spec.reflective.center_x = float(cx);
    spec.reflective.center_y = float(cy);
    spec.reflective.ghost_gain = float(rng.uniform(0.3, 0.5));
    spec.reflective.defocus_radius = rng.uniform() < 0.5 ? 0.f : float(rng.uniform(3.0, 6.0));
    const FlarePair pair_a = apply_reflective_flare(clean_a, spec);

    const double f = 1.4 * n;
    const double theta = rng.uniform(0.04, 0.05) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
    Homography h_true;
    {
        const double ct = std::cos(theta), st = std::sin(theta);
        const double k[9] = {f, 0, cx, 0, f, cy, 0, 0, 1};
        const double r[9] = {ct, 0, st, 0, 1, 0, -st, 0, ct};
        const double kinv[9] = {1 / f, 0, -cx / f, 0, 1 / f, -cy / f, 0, 0, 1};
        auto mul = [](const double* x, const double* y, double* out) {
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    double acc = 0;
                    for (int kk = 0; kk < 3; ++kk) acc += x[i * 3 + kk] * y[kk * 3 + j];
                    out[i * 3 + j] = acc;
                }
        };
        double t1[9], m[9];
        mul(r, kinv, t1);
        mul(k, t1, m);
        for (int i = 0; i < 9; ++i) h_true.m[size_t(i)] = m[i] / m[8];
    }

    LinearImage clean_b(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const auto p = h_true.apply(x, y);
            const double sx = std::clamp(p[0], 0.0, double(n - 1));
            const double sy = std::clamp(p[1], 0.0, double(n - 1));
            const int ix = std::min(int(sx), n - 2), iy = std::min(int(sy), n - 2);
            const double fx = sx - ix, fy = sy - iy;
            for (int c = 0; c < 3; ++c) {
                const double v =
                    (clean_a.at(ix, iy, c) * (1 - fx) + clean_a.at(ix + 1, iy, c) * fx) * (1 - fy) +
                    (clean_a.at(ix, iy + 1, c) * (1 - fx) + clean_a.at(ix + 1, iy + 1, c) * fx) * fy;
                clean_b.at(x, y, c) = float(v);
            }
        }
    const FlarePair pair_b = apply_reflective_flare(clean_b, spec);

    RotationFixture fx;
    fx.a = tone_map(pair_a.corrupted);
    fx.b = tone_map(pair_b.corrupted);
    fx.clean_a_enc = tone_map(pair_a.clean);
    fx.true_ghost_a = Mask(n, n, 0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (std::max({pair_a.flare_layer.at(x, y, 0), pair_a.flare_layer.at(x, y, 1),
                          pair_a.flare_layer.at(x, y, 2)}) > 0.05f)
                fx.true_ghost_a.at(x, y) = 1;
    return fx;
}

void criterion_reflective_builder() {
    Rng rng(1003);
    const int n_pairs = 50;
    double min_iou = 1.0, min_psnr = 1e9, max_seconds = 0.0;
    int processed = 0;
    for (int i = 0; i < n_pairs; ++i) {
        const RotationFixture fx = make_rotation_fixture(rng, 1024);
        const auto t0 = Clock::now();
        const auto products = build_reflective_pairs(fx.a, fx.b);
        max_seconds = std::max(max_seconds, seconds_since(t0) / 2.0); // two pairs per call
        const ReflectiveProduct& pa = products[0];
        if (pa.rejected || pa.flare_mask.count() == 0) {
            min_iou = 0.0;
            continue;
        }
        size_t inter = 0, uni = 0;
        for (int y = 0; y < 1024; ++y)
            for (int x = 0; x < 1024; ++x) {
                const bool m = pa.flare_mask.at(x, y), t = fx.true_ghost_a.at(x, y);
                inter += (m && t);
                uni += (m || t);
            }
        min_iou = std::min(min_iou, uni ? double(inter) / double(uni) : 0.0);

        double mse = 0;
        size_t cnt = 0;
        for (int y = 0; y < 1024; ++y)
            for (int x = 0; x < 1024; ++x) {
                if (!fx.true_ghost_a.at(x, y)) continue;
                for (int c = 0; c < 3; ++c) {
                    const double d = double(pa.ground_truth.at(x, y, c)) -
                                     double(fx.clean_a_enc.at(x, y, c));
                    mse += d * d;
                    ++cnt;
                }
            }
        min_psnr = std::min(
            min_psnr, 10.0 * std::log10(255.0 * 255.0 / std::max(mse / double(cnt), 1e-12)));
        ++processed;
    }
    std::ostringstream d;
    d << processed << "/" << n_pairs << " built, min IoU " << min_iou << ", min gt psnr "
      << min_psnr << " dB, max " << max_seconds << " s/pair";
    report(3, "reflective builder oracle closure",
           processed == n_pairs && min_iou >= 0.7 && min_psnr >= 40.0 && max_seconds < 5.0,
           d.str());
}

void criterion_ghost_symmetry() {
    Rng rng(1004);
    double max_err = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int n = 512;
        SceneSpec scene;
        scene.width = n;
        scene.height = n;
        scene.seed = rng.next_u64();
        const double cx = n / 2.0 + rng.uniform(-20.0, 20.0);
        const double cy = n / 2.0 + rng.uniform(-20.0, 20.0);
        SceneSource src;
        src.radius = float(rng.uniform(8.0, 20.0));
        src.intensity = float(rng.uniform(1.5, 3.0));
        const double ang = rng.uniform(0.0, 6.283185307);
        const double rad = rng.uniform(60.0, 150.0);
        src.cx = float(cx + rad * std::cos(ang));
        src.cy = float(cy + rad * std::sin(ang));
        scene.sources.push_back(src);
        const LinearImage clean = synth_scene(scene);

        FlareSpec spec;
        spec.kind = FlareKind::Reflective;
        spec.reflective.center_x = float(cx);
        spec.reflective.center_y = float(cy);
        spec.reflective.ghost_gain = float(rng.uniform(0.2, 0.5));
        spec.reflective.defocus_radius = rng.uniform() < 0.5 ? 0.f : float(rng.uniform(2.0, 8.0));
        const FlarePair pair = apply_reflective_flare(clean, spec);

        // Source centroid over the saturated footprint; ghost centroid over
        // the additive layer.
        double sx = 0, sy = 0, sm = 0, gx = 0, gy = 0, gm = 0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const float peak =
                    std::max({clean.at(x, y, 0), clean.at(x, y, 1), clean.at(x, y, 2)});
                if (peak >= 1.0f) {
                    const double w = clean.at(x, y, 1);
                    sx += w * x;
                    sy += w * y;
                    sm += w;
                }
                const double g = pair.flare_layer.at(x, y, 1);
                gx += g * x;
                gy += g * y;
                gm += g;
            }
        if (sm <= 0 || gm <= 0) {
            max_err = 1e9;
            break;
        }
        const double ex = (2 * cx - sx / sm) - gx / gm;
        const double ey = (2 * cy - sy / sm) - gy / gm;
        max_err = std::max(max_err, std::hypot(ex, ey));
    }
    std::ostringstream d;
    d << "max centroid error " << max_err << " px over 100 specs";
    report(4, "ghost point symmetry", max_err <= 1.0, d.str());
}

// ---- criterion 5: ordering-trend reproduction --------------------------------

void criterion_ordering_trend() {
    const auto t0 = Clock::now();
    const auto dir = temp_dir("acceptance_trend");
    const int n_pairs = 50;

    DatasetManifest manifest;
    RawMetadata meta;
    meta.wb_gains = {1.12f, 1.0f, 1.06f};
    meta.color_matrix = {1.45f, -0.35f, -0.10f, -0.25f, 1.45f, -0.20f, -0.05f, -0.45f, 1.50f};

    Rng rng(1005);
    for (int i = 0; i < n_pairs; ++i) {
        // Bright, chroma-textured scenes: the compression stage must face
        // fine signal content, not just residual noise it could mop up.
        SceneSpec scene;
        scene.width = 512;
        scene.height = 512;
        scene.seed = rng.next_u64();
        scene.background_high = float(rng.uniform(0.40, 0.45));
        scene.background_gamma = 1.0f;
        scene.detail = 0.6f;
        const int n_src = rng.uniform_int(1, 2);
        for (int s = 0; s < n_src; ++s) {
            SceneSource src;
            src.radius = float(rng.uniform(10.0, 22.0));
            src.intensity = float(rng.uniform(1.5, 3.5));
            src.cx = float(rng.uniform(60.0, 452.0));
            src.cy = float(rng.uniform(60.0, 452.0));
            scene.sources.push_back(src);
        }
        FlareSpec spec;
        spec.kind = FlareKind::Scattering;
        spec.seed = rng.next_u64();
        spec.scattering.glare_sigma = float(rng.uniform(8.0, 16.0));
        spec.scattering.glare_gain = float(rng.uniform(0.1, 0.3));
        spec.scattering.veiling = float(rng.uniform(0.03, 0.1));
        const FlarePair pair = apply_scattering_flare(synth_scene(scene), spec);

        // Independent 2% sensor noise on each capture of the pair.
        RawImage corr = add_sensor_noise(remosaic(pair.corrupted, meta), 0.02f, rng.next_u64());
        RawImage clean = add_sensor_noise(remosaic(pair.clean, meta), 0.02f, rng.next_u64());

        char id[32];
        std::snprintf(id, sizeof(id), "t%03d", i);
        fs::create_directories(dir / id);
        save_raw((dir / id / "corr.pgm").string(), corr);
        save_raw((dir / id / "clean.pgm").string(), clean);
        save_pfm((dir / id / "flare.pfm").string(), pair.flare_layer);
        save_png((dir / id / "corr.png").string(), tone_map(pair.corrupted));
        save_png((dir / id / "clean.png").string(), tone_map(pair.clean));

        PairRecord rec;
        rec.pair_id = id;
        rec.flare_kind = "scattering";
        rec.scene_tag = SceneTag::OutdoorNight;
        rec.patch_size = 512;
        rec.paths = {std::string(id) + "/corr.pgm", std::string(id) + "/clean.pgm",
                     std::string(id) + "/corr.png", std::string(id) + "/clean.png",
                     std::string(id) + "/flare.pfm"};
        rec.registration = Translation{};
        rec.quality = {0.0, 1.0, 0.1};
        manifest.records.push_back(rec);
    }

    AblationOptions opt;
    opt.remover = RemoverKind::Baseline;
    opt.manifest_dir = dir.string();
    opt.seed = 1005;
    opt.jobs = default_jobs();
    // amount fixed at 1.0 and quality at 60 for ablation runs; the denoiser
    // strength and the sharpening radius are the stand-in stage tuning.
    opt.stages.denoise_strength = 1.3f;
    opt.stages.sharpen_radius = 4.0f;
    const MetricReport report_data = run_ablation(manifest, table_rows(), opt);

    const auto& rows = report_data.rows;
    const bool a_ok = rows[1].psnr_mean > rows[0].psnr_mean && rows[1].ssim_mean > rows[0].ssim_mean;
    const bool b_ok = rows[2].psnr_mean < rows[1].psnr_mean;
    const bool c_ok = rows[3].psnr_mean < rows[2].psnr_mean;
    bool d_ok = true;
    for (int i = 0; i < 4; ++i) d_ok = d_ok && rows[4].psnr_mean < rows[size_t(i)].psnr_mean;
    const double elapsed = seconds_since(t0);

    std::ostringstream d;
    d.precision(4);
    d << "psnr means:";
    for (const auto& r : rows) d << " " << r.psnr_mean;
    d << "; ssim row0->1: " << rows[0].ssim_mean << "->" << rows[1].ssim_mean;
    d << "; " << elapsed << " s";
    report(5, "ordering-trend sign reproduction",
           a_ok && b_ok && c_ok && d_ok && elapsed < 600.0, d.str());
    fs::remove_all(dir);
}

// ---- criterion 6: metric correctness -----------------------------------------

void criterion_metrics() {
    bool ok = true;
    std::ostringstream d;

    EncodedImage a(32, 32, 100), b(32, 32, 110);
    const double p = psnr(a, b);
    const double expected = 20.0 * std::log10(255.0 / 10.0);
    ok = ok && std::abs(p - expected) < 1e-3 && std::abs(expected - 28.131) < 1e-3;
    d << "uniform-10 psnr " << p;

    ok = ok && std::isinf(psnr(a, a));
    ok = ok && std::abs(psnr(EncodedImage(16, 16, 0), EncodedImage(16, 16, 255))) < 1e-12;

    const EncodedImage t1 = textured_image(48, 48, 77);
    ok = ok && std::abs(ssim(t1, t1) - 1.0) < 1e-12;
    const EncodedImage t2 = with_gaussian_noise(t1, 10.0, 78);
    ok = ok && std::abs(ssim(t1, t2) - ssim(t2, t1)) < 1e-12;

    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double s_expected = c1 / (255.0 * 255.0 + c1);
    const double s = ssim(EncodedImage(16, 16, 0), EncodedImage(16, 16, 255));
    ok = ok && std::abs(s - s_expected) / s_expected < 0.10 &&
         std::abs(s_expected - 1.0e-4) / 1.0e-4 < 0.10;
    d << ", black-vs-white ssim " << s;

    report(6, "metric closed forms", ok, d.str());
}

// ---- criterion 7: ISP stage invariants ----------------------------------------

void criterion_isp_invariants() {
    bool ok = true;
    std::ostringstream d;

    EncodedImage codes(256, 1);
    for (int i = 0; i < 256; ++i)
        for (int c = 0; c < 3; ++c) codes.at(i, 0, c) = uint8_t(i);
    ok = ok && tone_map(linearize(codes)).samples == codes.samples;

    const EncodedImage img = textured_image(128, 96, 88);
    ok = ok && denoise(img, 0.f).samples == img.samples;
    ok = ok && sharpen_usm(img, 0.f, 2.f).samples == img.samples;

    const EncodedImage flat(64, 64, 131);
    ok = ok && denoise(flat, 1.2f).samples == flat.samples;
    ok = ok && sharpen_usm(flat, 1.5f, 2.f).samples == flat.samples;
    RawMosaic m;
    m.width = 32;
    m.height = 32;
    m.cfa = Cfa::BGGR;
    m.samples.assign(1024, 0.31f);
    const LinearImage dm = demosaic_bilinear(m);
    for (float v : dm.samples) ok = ok && v == 0.31f;

    double prev = 1e9;
    bool monotone = true;
    std::vector<double> psnrs;
    for (int q : {90, 70, 50, 30}) {
        const double p = psnr(img, jpeg_roundtrip(img, q));
        psnrs.push_back(p);
        monotone = monotone && p <= prev + 1e-9;
        prev = p;
    }
    ok = ok && monotone;
    d << "jpeg psnr";
    for (double p : psnrs) d << " " << p;

    report(7, "ISP stage invariants", ok, d.str());
}

// ---- criterion 8: detection quality -------------------------------------------

void criterion_detection() {
    Rng rng(1008);
    int total_sources = 0, detected = 0;
    double max_centroid_err = 0.0;
    bool dark_ok = true, monotone_ok = true;

    for (int i = 0; i < 200; ++i) {
        const int n = 256;
        SceneSpec scene;
        scene.width = n;
        scene.height = n;
        scene.seed = rng.next_u64();
        scene.background_high = float(rng.uniform(0.15, 0.3));
        const int n_src = rng.uniform_int(1, 3);
        std::vector<std::array<double, 2>> truth;
        for (int s = 0; s < n_src; ++s) {
            SceneSource src;
            src.radius = float(rng.uniform(6.0, 16.0));
            src.intensity = float(rng.uniform(1.5, 3.0));
            // Rejection-sample positions so disks stay disjoint.
            for (int attempt = 0; attempt < 64; ++attempt) {
                src.cx = float(rng.uniform(40.0, n - 40.0));
                src.cy = float(rng.uniform(40.0, n - 40.0));
                bool clear = true;
                for (const auto& t : truth)
                    if (std::hypot(t[0] - src.cx, t[1] - src.cy) < 70.0) clear = false;
                if (clear) break;
            }
            bool clear = true;
            for (const auto& t : truth)
                if (std::hypot(t[0] - src.cx, t[1] - src.cy) < 70.0) clear = false;
            if (!clear) continue;
            truth.push_back({src.cx, src.cy});
            scene.sources.push_back(src);
        }
        const EncodedImage img = tone_map(synth_scene(scene));
        const auto sources = detect_light_sources(img);
        total_sources += int(truth.size());
        for (const auto& t : truth) {
            double best = 1e9;
            for (const auto& s : sources)
                best = std::min(best, std::hypot(s.centroid_x - t[0], s.centroid_y - t[1]));
            if (best <= 2.0) {
                ++detected;
                max_centroid_err = std::max(max_centroid_err, best);
            }
        }
    }

    // Dark scenes yield nothing.
    for (int i = 0; i < 5; ++i) {
        SceneSpec scene;
        scene.width = 128;
        scene.height = 128;
        scene.seed = 100 + uint64_t(i);
        if (!detect_light_sources(tone_map(synth_scene(scene))).empty()) dark_ok = false;
    }

    // Monotone in threshold.
    {
        SceneSpec scene;
        scene.width = 256;
        scene.height = 256;
        scene.seed = 5555;
        scene.sources.push_back({80.f, 80.f, 18.f, 2.5f});
        scene.sources.push_back({190.f, 170.f, 10.f, 2.0f});
        const EncodedImage img = tone_map(synth_scene(scene));
        size_t prev = SIZE_MAX;
        for (float thr : {220.f, 235.f, 242.25f, 250.f, 254.f}) {
            DetectParams p;
            p.lum_threshold = thr;
            const size_t cnt = detect_light_sources(img, p).size();
            if (cnt > prev) monotone_ok = false;
            prev = cnt;
        }
    }

    const double rate = double(detected) / double(total_sources);
    std::ostringstream d;
    d << "detection rate " << rate * 100 << "% of " << total_sources << ", max centroid err "
      << max_centroid_err << " px, dark scenes " << (dark_ok ? "clean" : "dirty");
    report(8, "light-source detection quality",
           rate >= 0.95 && max_centroid_err <= 2.0 && dark_ok && monotone_ok, d.str());
}

// ---- criterion 9: end-to-end reproducibility ----------------------------------

void criterion_reproducibility() {
    if (g_cli_path.empty()) {
        report(9, "end-to-end reproducibility", false, "no CLI path supplied (argv[1])");
        return;
    }
    const auto dir = temp_dir("acceptance_repro");
    auto shell = [&](const std::string& args) {
        const std::string cmd = g_cli_path + " " + args + " 2>/dev/null";
        return std::system(cmd.c_str()) == 0;
    };
    auto one_run = [&](const std::string& tag, std::string& out) {
        const std::string caps = (dir / (tag + "_caps")).string();
        const std::string ds = (dir / (tag + "_ds")).string();
        const std::string rep = (dir / (tag + "_rep")).string();
        if (!shell("synth --kind scattering --count 3 --mode captures --vibration 2 --noise 0.01"
                   " --severity global --out " + caps + " --seed 901 --jobs 2"))
            return false;
        if (!shell("build --capture-dir " + caps + " --kind scattering --out " + ds + " --jobs 2"))
            return false;
        if (!shell("ablate --manifest " + ds + "/manifest.jsonl --orderings 1 --remover baseline"
                   " --seed 901 --max-pairs 3 --out " + rep + " --jobs 2"))
            return false;
        out = read_text_file(ds + "/manifest.jsonl") + "\x01" + read_text_file(rep + "/report.csv");
        return true;
    };
    std::string first, second;
    const bool ran = one_run("r1", first) && one_run("r2", second);
    std::ostringstream d;
    d << (ran ? (first == second ? "byte-identical manifests and csv reports"
                                 : "outputs differ between runs")
              : "pipeline commands failed");
    report(9, "end-to-end reproducibility", ran && first == second, d.str());
    fs::remove_all(dir);
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli_path = argv[1];

    criterion_registration();
    criterion_cfa_phase();
    criterion_reflective_builder();
    criterion_ghost_symmetry();
    criterion_ordering_trend();
    criterion_metrics();
    criterion_isp_invariants();
    criterion_detection();
    criterion_reproducibility();

    if (g_failures == 0) {
        std::printf("acceptance: all 9 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return 1;
}
