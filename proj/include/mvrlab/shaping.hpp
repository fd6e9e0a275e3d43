#pragma once

#include "mvrlab/core.hpp"
#include "mvrlab/relevance.hpp"
#include "mvrlab/replay.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mvrlab {

struct ShapingConfig {
    double w = 0.1;
    /// Reference states drawn per query; 0 means use every reference state.
    std::size_t m_ref = 64;
};

void validate(const ShapingConfig& cfg);

/// Relevance of every state held by a reference set under one model snapshot.
class ReferenceRelevance {
  public:
    ReferenceRelevance() = default;
    ReferenceRelevance(const RelevanceModel& m, const ReferenceSet& ref);

    bool empty() const { return values_.empty(); }
    std::span<const double> values() const { return values_; }
    std::vector<StateVec> states() const { return states_; }

  private:
    std::vector<double> values_;
    std::vector<StateVec> states_;
};

struct VlmReward {
    double value = 0.0;
    /// False when the reference set is empty; value is then 0.
    bool active = false;
};

/// mean over sampled reference states s' of log sigmoid(f(s) - f(s')). The draw is seeded
/// by `draw_seed`, so a given (state, seed) always sees the same reference states.
VlmReward r_vlm(const RelevanceModel& m, const StateVec& s, const ReferenceSet& ref,
                const ShapingConfig& cfg, std::uint64_t draw_seed);
/// Same estimator with f(s) and the reference relevances precomputed.
VlmReward r_vlm_from_values(double f_s, const ReferenceRelevance& ref, const ShapingConfig& cfg,
                            std::uint64_t draw_seed);

double r_mvr(double task_reward, double vlm_reward, double w);

/// Seed for the reference draw of a stored transition.
std::uint64_t transition_draw_seed(std::uint64_t run_seed, std::uint64_t serial);

/// Rewrites every entry's shaped reward from its stored task reward under the current model.
/// Task rewards are never modified.
void relabel_buffer(ReplayBuffer& buffer, const RelevanceModel& m, const ReferenceSet& ref,
                    const ShapingConfig& cfg, std::uint64_t run_seed);

struct JensenGap {
    double lhs = 0.0;  // log sigmoid(mean f_learner - mean f_reference)
    double rhs = 0.0;  // mean over all pairs of log sigmoid(f_learner - f_reference)
};

JensenGap jensen_gap(std::span<const double> learner_f, std::span<const double> reference_f);
JensenGap jensen_gap(const RelevanceModel& m, std::span<const StateVec> learner_states,
                     const ReferenceSet& ref);

/// Discounted empirical occupancy estimate of E_{d^pi}[f]: weights gamma^t within each
/// episode, normalised by the total weight.
double policy_relevance(const RelevanceModel& m, std::span<const StateSequence> episodes, double gamma);
double policy_relevance(std::span<const std::vector<double>> episode_f, double gamma);

struct DecayReport {
    double std_ratio = 1.0;
    double mean_magnitude_ratio = 1.0;
    double first_std = 0.0;
    double final_std = 0.0;
    /// Set when the first-window spread is zero and the ratio is reported as 1.
    bool degenerate = false;
};

/// Compares the spread of r_vlm in the final window of a history with its first window.
DecayReport decay_metric(std::span<const double> history, std::size_t window);

struct EpisodeSummary {
    double mean_f_vlm = 0.0;
    double mean_f_mvr = 0.0;
    double mean_r_mvr = 0.0;
    double mean_r_task = 0.0;
    bool success = false;
};

struct ShapingDiagnostics {
    double r_vlm_mean = 0.0;
    double r_vlm_std = 0.0;
    JensenGap jensen;
    std::optional<double> corr_f_vlm_success;
    std::optional<double> corr_f_mvr_success;
    std::optional<double> corr_r_mvr_success;
    std::optional<double> corr_r_task_success;
    std::optional<double> corr_f_vlm_task;
    std::optional<double> corr_f_mvr_task;
    std::optional<double> corr_r_mvr_task;
};

/// Pearson correlation; empty when either input has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

ShapingDiagnostics correlation_report(std::span<const EpisodeSummary> episodes);

}  // namespace mvrlab
