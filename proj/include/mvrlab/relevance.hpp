#pragma once

#include "mvrlab/core.hpp"
#include "mvrlab/random.hpp"

#include <span>
#include <vector>

namespace mvrlab {

/// State relevance f(s) = <e(s), p/|p|> where e(s) is the l2-normalised output of a
/// two-layer encoder h2 = W2 relu(W1 s + b1) + b2. The same type doubles as a gradient
/// container.
struct RelevanceModel {
    Eigen::MatrixXd W1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd W2;
    Eigen::VectorXd b2;
    Eigen::VectorXd p;

    /// Encoder layers use the usual U(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; the predictor
    /// uses Kaiming uniform, U(-sqrt(6/hidden), sqrt(6/hidden)).
    static RelevanceModel init(int state_dim, int hidden, std::uint64_t seed);
    static RelevanceModel zeros_like(const RelevanceModel& m);

    int state_dim() const { return static_cast<int>(W1.cols()); }
    int hidden() const { return static_cast<int>(W1.rows()); }

    /// Parameters in order W1, b1, W2, b2, p; matrices column-major.
    std::size_t num_params() const;
    std::vector<double> flat() const;
    void set_flat(std::span<const double> values);

    bool all_finite() const;
};

double f_mvr(const RelevanceModel& m, const StateVec& s);
/// e(s); the zero vector when h2 vanishes.
Eigen::VectorXd state_embedding(const RelevanceModel& m, const StateVec& s);
/// f for each column of a (state_dim x n) matrix.
Eigen::VectorXd f_mvr_batch(const RelevanceModel& m, const Eigen::MatrixXd& states);

/// Mean of per-state normalised embeddings over a sequence.
Eigen::VectorXd encode_seq_mean(const RelevanceModel& m, const StateSequence& seq);
double mean_relevance(const RelevanceModel& m, const StateSequence& seq);

double sigmoid(double x);
/// log(sigmoid(x)) without overflow.
double log_sigmoid(double x);

/// Bradley-Terry probability that the clip with score_i beats the one with score_j.
double h_vid(double score_i, double score_j, double beta = 1.0);
/// Probability that seq_i beats seq_j under the relevance model (temporal averaging).
double h_state(const RelevanceModel& m, const StateSequence& seq_i, const StateSequence& seq_j);
/// Cross-entropy between a target probability and a predicted one.
double binary_cross_entropy(double target, double predicted);

class ComparisonPair {
  public:
    ComparisonPair(const SimilaritySample& a, const SimilaritySample& b);

    const SimilaritySample& first() const { return *a_; }
    const SimilaritySample& second() const { return *b_; }
    /// Pairwise clip similarity psi(o_i, o_j).
    double clip_similarity() const;

  private:
    const SimilaritySample* a_;
    const SimilaritySample* b_;
};

struct RelevanceLossOptions {
    double beta = 1.0;
    double reg_weight = 1.0;
};

double loss_matching(const RelevanceModel& m, const ComparisonPair& pair, double beta = 1.0);
double loss_reg(const RelevanceModel& m, const ComparisonPair& pair);
/// Mean over pairs of loss_matching + reg_weight * loss_reg.
double loss_total(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                  const RelevanceLossOptions& opts = {});
/// Same value as loss_total; accumulates d(loss)/d(params) into `grad` (which must be
/// shaped like `m`) when it is non-null.
double loss_total_grad(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                       const RelevanceLossOptions& opts, RelevanceModel* grad);

/// Regression objectives used by the baselines: squared error of the sequence-mean
/// relevance against the text score ("direct"), or of per-state relevance against
/// per-frame image scores (image similarity).
double loss_direct_grad(const RelevanceModel& m, std::span<const SimilaritySample* const> batch,
                        RelevanceModel* grad);
double loss_image_grad(const RelevanceModel& m, std::span<const SimilaritySample* const> batch,
                       RelevanceModel* grad);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Parameters whose perturbation crossed a ReLU or |.| kink; compared values there are
    /// not meaningful and are excluded.
    std::size_t skipped_kinks = 0;
};

/// Central differences against loss_total_grad over every parameter. The relative error
/// is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                           double epsilon, const RelevanceLossOptions& opts = {},
                           double floor = 1e-6);

enum class RelevanceObjective { Matching, Direct, ImageRegression };

struct LearningRateSchedule {
    double start = 1e-3;
    double end = 1e-3;

    static LearningRateSchedule fixed(double lr) { return {lr, lr}; }
    static LearningRateSchedule linear(double from, double to) { return {from, to}; }
    /// Rate at training progress in [0, 1].
    double at(double progress) const;
};

struct TrainConfig {
    LearningRateSchedule learning_rate = LearningRateSchedule::fixed(1e-3);
    std::size_t batch_size = 64;
    std::size_t max_epochs = 200;
    std::size_t steps_per_epoch = 10;
    std::size_t early_stop_patience = 10;
    double holdout_fraction = 0.1;
    double beta = 1.0;
    double reg_weight = 1.0;
    RelevanceObjective objective = RelevanceObjective::Matching;
};

void validate(const TrainConfig& cfg);

struct TrainReport {
    std::size_t epochs = 0;
    std::size_t steps = 0;
    double initial_holdout_loss = 0.0;
    double best_holdout_loss = 0.0;
    bool stopped_early = false;
    bool finite = true;
};

/// Plain SGD on the configured objective over uniformly sampled (possibly cross-view) pairs.
/// A fresh 10% hold-out split is drawn on every call; the parameters with the best held-out
/// loss are returned.
RelevanceModel train_relevance(RelevanceModel m, const RewardDataset& d, const TrainConfig& cfg,
                               Rng& rng, TrainReport* report = nullptr);

/// Distinct ordered index pairs drawn uniformly without replacement.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::span<const std::size_t> pool,
                                                              std::size_t count, Rng& rng);

}  // namespace mvrlab
