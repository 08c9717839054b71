#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flarekit/dataset.hpp"
#include "flarekit/flare_removal.hpp"
#include "flarekit/isp.hpp"

namespace flarekit {

// One report row: a processing order plus the subset of the non-removal
// stages that are enabled for it.
struct AblationRowSpec {
    int ordering_id = 1; // 1..4, slot of the removal stage
    bool denoise = false;
    bool sharpen = false;
    bool compression = false;
};

// Full presets for the given ordering ids.
std::vector<AblationRowSpec> rows_from_orderings(const std::vector<int>& orderings);

// The cumulative five-row schedule of the ordering study: stage-free,
// +denoise, +sharpen, +compression (ordering 1), then ordering 4 (no denoise).
std::vector<AblationRowSpec> table_rows();

struct StageParams {
    float denoise_strength = 1.0f;
    float sharpen_amount = 1.0f;
    float sharpen_radius = 2.0f;
    int jpeg_quality = 60;
};

struct MetricRow {
    AblationRowSpec spec;
    double psnr_mean = 0.0;
    double psnr_std = 0.0;
    double ssim_mean = 0.0;
    double ssim_std = 0.0;
    // Null on the first row; exactly row value minus first-row value after.
    std::optional<double> delta_psnr;
    std::optional<double> delta_ssim;
    // Reserved so externally computed perceptual scores can be merged in.
    std::optional<double> lpips;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    int n_pairs = 0;
    uint64_t seed = 0;
    std::string remover_kind;
};

struct AblationOptions {
    StageParams stages;
    RemoverKind remover = RemoverKind::Baseline;
    uint64_t seed = 0;
    int jobs = 1;
    std::string manifest_dir; // base for relative record paths
    size_t max_pairs = 0;     // 0 = all accepted records
};

// For every row: corrupted raw through the pipeline with the remover at its
// configured slot, scored against the flare-free capture developed with the
// plain front-end (no back-end stages). PSNR/SSIM aggregated as mean +/- std
// over pairs ordered by pair_id.
MetricReport run_ablation(const DatasetManifest& manifest,
                          const std::vector<AblationRowSpec>& rows,
                          const AblationOptions& options);

std::string render_report_text(const MetricReport& report);
std::string render_report_csv(const MetricReport& report);
MetricReport report_from_csv(const std::string& csv); // throws ParseError

// Pipeline assembly shared with the CLI: the backend order for a row and the
// same order with the removal slot dropped (reference track).
PipelineConfig config_for_row(const AblationRowSpec& row, const StageParams& stages,
                              bool with_removal);

} // namespace flarekit
