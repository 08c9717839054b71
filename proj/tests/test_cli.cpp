#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "flarekit/dataset.hpp"
#include "flarekit/util.hpp"
#include "test_support.hpp"

using namespace flarekit;
using namespace testsupport;
namespace fs = std::filesystem;

#ifndef FLAREKIT_BIN
#define FLAREKIT_BIN "./flarekit"
#endif

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(FLAREKIT_BIN) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("synth --count 0 writes an empty manifest and exits 0") {
    const auto dir = temp_dir("cli_synth0");
    CHECK(run("synth --kind scattering --count 0 --out " + (dir / "ds").string() + " --seed 1") ==
          0);
    const DatasetManifest m = manifest_read((dir / "ds" / "manifest.jsonl").string());
    CHECK(m.records.empty());
    CHECK(fs::exists(dir / "ds" / "run_record.json"));
    fs::remove_all(dir);
}

TEST_CASE("synth is deterministic under a fixed seed") {
    const auto dir = temp_dir("cli_synth_det");
    const std::string a = (dir / "a").string(), b = (dir / "b").string();
    REQUIRE(run("synth --kind scattering --count 2 --out " + a + " --seed 42 --jobs 2") == 0);
    REQUIRE(run("synth --kind scattering --count 2 --out " + b + " --seed 42 --jobs 1") == 0);
    CHECK(read_text_file(a + "/manifest.jsonl") == read_text_file(b + "/manifest.jsonl"));
    const auto da = read_binary_file(a + "/scattering/scattering_0001/raw_corrupted.pgm");
    const auto db = read_binary_file(b + "/scattering/scattering_0001/raw_corrupted.pgm");
    CHECK(da == db);

    const std::string c = (dir / "c").string();
    REQUIRE(run("synth --kind scattering --count 2 --out " + c + " --seed 43") == 0);
    CHECK(read_text_file(a + "/manifest.jsonl") != read_text_file(c + "/manifest.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("synth validates its arguments") {
    const auto dir = temp_dir("cli_synth_bad");
    CHECK(run("synth --kind sparkle --count 1 --out " + (dir / "x").string()) == 2);
    CHECK(run("synth --count 1") == 2); // missing --out
    fs::remove_all(dir);
}

TEST_CASE("isp command develops a raw and honors preset traces") {
    const auto dir = temp_dir("cli_isp");
    REQUIRE(run("synth --kind scattering --count 1 --out " + (dir / "ds").string() + " --seed 3") ==
            0);
    const std::string raw = (dir / "ds" / "scattering" / "scattering_0000" / "raw_corrupted.pgm").string();

    // Pure RAW2RGB: five front-end stages in the trace.
    const std::string out1 = (dir / "plain.png").string();
    REQUIRE(run("isp --raw " + raw + " --out " + out1) == 0);
    const std::string trace1 = read_text_file(out1 + ".trace.json");
    CHECK(trace1.find("tone_map") != std::string::npos);
    CHECK(trace1.find("denoise") == std::string::npos);

    // Preset 3 puts flare removal last.
    const std::string cfg = (dir / "cfg.json").string();
    write_text_file(cfg, R"({"config_id":3})");
    const std::string out2 = (dir / "p3.png").string();
    REQUIRE(run("isp --raw " + raw + " --config " + cfg + " --remover baseline --out " + out2) ==
            0);
    const std::string trace2 = read_text_file(out2 + ".trace.json");
    const size_t pos_sharpen = trace2.find("\"sharpen\"");
    const size_t pos_comp = trace2.find("\"compression\"");
    const size_t pos_removal = trace2.find("\"flare_removal\"");
    REQUIRE(pos_sharpen != std::string::npos);
    REQUIRE(pos_comp != std::string::npos);
    REQUIRE(pos_removal != std::string::npos);
    CHECK(pos_sharpen < pos_comp);
    CHECK(pos_comp < pos_removal);

    // Missing sidecar: validation failure, exit 2.
    const std::string orphan = (dir / "orphan.pgm").string();
    fs::copy_file(raw, orphan);
    CHECK(run("isp --raw " + orphan + " --out " + (dir / "o.png").string()) == 2);
    fs::remove_all(dir);
}

TEST_CASE("eval reports the infinity sentinel for identical pairs") {
    const auto dir = temp_dir("cli_eval");
    REQUIRE(run("synth --kind scattering --count 1 --out " + (dir / "ds").string() + " --seed 4") ==
            0);
    const std::string png = (dir / "ds" / "scattering" / "scattering_0000" / "rgb_clean.png").string();
    const std::string pairs = (dir / "pairs.jsonl").string();
    write_text_file(pairs, "{\"a\":\"" + png + "\",\"b\":\"" + png + "\"}\n");
    const std::string out = (dir / "metrics.csv").string();
    REQUIRE(run("eval --pairs " + pairs + " --metrics psnr,ssim --out " + out) == 0);
    const std::string csv = read_text_file(out);
    CHECK(csv.find("inf") != std::string::npos);
    CHECK(csv.find("1.000000") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("ablate emits one row per ordering and a run record") {
    const auto dir = temp_dir("cli_ablate");
    REQUIRE(run("synth --kind scattering --count 2 --out " + (dir / "ds").string() +
                " --seed 5 --severity global") == 0);
    const std::string rep = (dir / "rep").string();
    REQUIRE(run("ablate --manifest " + (dir / "ds" / "manifest.jsonl").string() +
                " --orderings 1,4 --remover identity --out " + rep + " --jobs 2") == 0);
    const std::string csv = read_text_file(rep + "/report.csv");
    int lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 3); // header + 2 rows
    CHECK(fs::exists(rep + "/report.txt"));
    CHECK(fs::exists(rep + "/run_record.json"));

    // Unknown manifest: validation failure.
    CHECK(run("ablate --manifest /nonexistent.jsonl --out " + rep) == 2);
    fs::remove_all(dir);
}

TEST_CASE("build on synthetic captures accepts most windows") {
    const auto dir = temp_dir("cli_build");
    REQUIRE(run("synth --kind scattering --count 6 --mode captures --vibration 3 --out " +
                (dir / "caps").string() + " --seed 6 --jobs 4") == 0);
    REQUIRE(run("build --capture-dir " + (dir / "caps").string() + " --kind scattering --out " +
                (dir / "ds").string() + " --jobs 4") == 0);
    const DatasetManifest m = manifest_read((dir / "ds" / "manifest.jsonl").string());
    REQUIRE_FALSE(m.records.empty());
    size_t accepted = 0;
    for (const auto& r : m.records) {
        accepted += r.accepted;
        if (r.accepted) {
            CHECK(fs::exists(dir / "ds" / r.paths.raw_corrupted));
            CHECK(fs::exists(dir / "ds" / r.paths.rgb_clean));
            CHECK(r.patch_size == 512);
        }
    }
    CHECK(double(accepted) / double(m.records.size()) >= 0.9);
    fs::remove_all(dir);
}

TEST_CASE("end-to-end reproducibility: synth, build, ablate twice") {
    const auto dir = temp_dir("cli_repro");
    auto one_run = [&](const std::string& tag) {
        const std::string caps = (dir / (tag + "_caps")).string();
        const std::string ds = (dir / (tag + "_ds")).string();
        const std::string rep = (dir / (tag + "_rep")).string();
        REQUIRE(run("synth --kind scattering --count 2 --mode captures --vibration 2 --noise 0.01"
                    " --out " + caps + " --seed 77 --jobs 2") == 0);
        REQUIRE(run("build --capture-dir " + caps + " --kind scattering --out " + ds +
                    " --jobs 2") == 0);
        REQUIRE(run("ablate --manifest " + ds + "/manifest.jsonl --orderings 1 --remover baseline"
                    " --seed 77 --max-pairs 2 --out " + rep + " --jobs 2") == 0);
        return read_text_file(ds + "/manifest.jsonl") + "|" + read_text_file(rep + "/report.csv");
    };
    const std::string first = one_run("a");
    const std::string second = one_run("b");
    CHECK(first == second);
    fs::remove_all(dir);
}
