#pragma once

#include "mvrlab/checkpoint.hpp"
#include "mvrlab/config.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvrlab {

/// A non-finite loss or parameter during training. Maps to exit code 3.
class NumericFailure : public std::runtime_error {
  public:
    NumericFailure(const std::string& what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
    const std::string& dump() const { return dump_; }

  private:
    std::string dump_;
};

/// One row per evaluation interval. Missing values (no shaping yet) are NaN and print as "nan".
struct MetricsRow {
    std::size_t step = 0;
    std::size_t episode = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double success_rate = 0.0;
    double r_vlm_mean = 0.0;
    double r_vlm_std = 0.0;
    double jensen_lhs = 0.0;
    double jensen_rhs = 0.0;
    double decay_ratio = 0.0;
    int view_id_last_rendered = -1;
    double wall_ms = 0.0;
};

std::string metrics_header();
std::string metrics_line(const MetricsRow& row);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

struct RunResult {
    std::vector<MetricsRow> rows;
    EvalResult final_eval;
    Checkpoint checkpoint;
    RewardDataset dataset;
    std::vector<ViewId> rendered_views;
    std::size_t episodes = 0;
    std::size_t clips_scored = 0;
    std::size_t relevance_updates = 0;
};

/// The outer training loop. When `out_dir` is non-empty it receives metrics.csv,
/// config.resolved and checkpoint.txt (and failure.txt on a numeric failure).
/// Throws ConfigError or NumericFailure.
RunResult run_training(const RunConfig& cfg, const std::string& out_dir = "");

/// A labelled configuration in a sweep.
struct SweepArm {
    std::string label;
    RunConfig config;
};

struct SweepRun {
    std::string label;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double final_return = 0.0;
    double success_rate = 0.0;
    double phase_rate = 0.0;
};

struct SweepRow {
    std::string label;
    std::size_t runs = 0;
    std::size_t failed = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    /// Mean and std divided by the reference arm's mean return; NaN without a reference arm.
    double normalized_mean = 0.0;
    double normalized_std = 0.0;
    double mean_success = 0.0;
    double mean_phase_rate = 0.0;
};

struct SweepSummary {
    std::vector<SweepRow> rows;
    std::vector<SweepRun> runs;
};

/// Runs every arm with seeds base.seed, base.seed + 1, ... A failed run marks its row
/// instead of stopping the sweep. Runs may execute on up to mvrlab_threads() threads.
SweepSummary run_sweep(const std::vector<SweepArm>& arms, std::size_t seeds,
                       const std::string& reference_label = "mvr");

/// Sweep over reward variants of one base config.
SweepSummary run_ablation(const RunConfig& base, const std::vector<RewardVariant>& variants, std::size_t seeds);

std::string sweep_csv(const SweepSummary& s);
std::string sweep_table(const SweepSummary& s);
/// One line per (arm, seed) run.
std::string sweep_runs_csv(const SweepSummary& s);

/// Worker thread cap from MVRLAB_THREADS (default 1).
std::size_t mvrlab_threads();

struct DiagReport {
    bool shaping_active = false;
    std::size_t rollouts = 0;
    double success_rate = 0.0;
    ShapingDiagnostics diagnostics;
    /// 95th percentile of corr(r_mvr, success) under shuffled success labels.
    std::optional<double> null_corr_q95;
    std::optional<DecayReport> decay;
    std::vector<EpisodeSummary> episodes;
};

/// Rolls the checkpointed policy out `cfg.diag_rollouts` times under a sweep of exploration
/// noise levels and reports reward/success correlations, the Jensen gap and the decay of
/// r_vlm recorded during training.
DiagReport run_diag(const RunConfig& cfg, const Checkpoint& ck);
std::string diag_csv(const DiagReport& r);

/// Does L_reg make the learned relevance less dependent on the camera it was trained from?
/// For every seed and every configured view, two models (reg_weight as configured vs 0)
/// are trained on the same scripted sequences rendered from that single view. For each
/// held-out probe sequence we take the across-view std of its mean relevance; a seed's
/// reduction is 1 - median(std with reg) / median(std without).
struct ViewVarianceReport {
    std::vector<double> reductions;     // one per seed
    std::vector<double> median_std_reg;
    std::vector<double> median_std_noreg;
    double median_reduction = 0.0;
};

struct ViewVarianceOptions {
    std::size_t seeds = 5;
    std::size_t sequences = 200;
    std::size_t probes = 50;
};

ViewVarianceReport view_variance_study(const RunConfig& cfg, const ViewVarianceOptions& opts = {});

/// Scripted, noisy sequences of length `clip_length` for relevance studies: on the seat a
/// damped controller toward a random target near the chair, on the cycler a random
/// drifting phase rate.
StateSequence scripted_sequence(const EnvSpec& spec, std::size_t length, Rng& rng, std::int64_t id);

}  // namespace mvrlab
