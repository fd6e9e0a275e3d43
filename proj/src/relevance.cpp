#include "mvrlab/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

namespace mvrlab {

namespace {

struct SeqCache {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z1;
    Eigen::MatrixXd H1;
    Eigen::MatrixXd E;
    Eigen::VectorXd norms;
    Eigen::VectorXd f;
    double mean_f = 0.0;
    Eigen::VectorXd mean_e;
};

Eigen::VectorXd unit_predictor(const RelevanceModel& m) {
    const double n = m.p.norm();
    if (n == 0.0)
        return Eigen::VectorXd::Zero(m.p.size());
    return m.p / n;
}

SeqCache forward(const RelevanceModel& m, const Eigen::MatrixXd& X) {
    if (X.rows() != m.state_dim())
        throw InvalidArgument("state dimension does not match the relevance model");
    SeqCache c;
    c.X = X;
    c.Z1 = (m.W1 * X).colwise() + m.b1;
    c.H1 = c.Z1.cwiseMax(0.0);
    Eigen::MatrixXd H2 = (m.W2 * c.H1).colwise() + m.b2;
    c.norms = H2.colwise().norm().transpose();
    c.E = Eigen::MatrixXd::Zero(H2.rows(), H2.cols());
    for (Eigen::Index t = 0; t < H2.cols(); ++t)
        if (c.norms[t] > 0.0)
            c.E.col(t) = H2.col(t) / c.norms[t];
    c.f = (unit_predictor(m).transpose() * c.E).transpose();
    c.mean_f = c.f.mean();
    c.mean_e = c.E.rowwise().mean();
    return c;
}

/// Backpropagates per-state upstream gradients dF (n) and dE (hidden x n).
void backward(const RelevanceModel& m, const SeqCache& c, const Eigen::VectorXd& dF,
              const Eigen::MatrixXd& dE, Eigen::VectorXd& dp_unit, RelevanceModel& g) {
    const Eigen::VectorXd pt = unit_predictor(m);
    dp_unit += c.E * dF;
    Eigen::MatrixXd dEt = dE + pt * dF.transpose();
    Eigen::MatrixXd dH2 = Eigen::MatrixXd::Zero(dEt.rows(), dEt.cols());
    for (Eigen::Index t = 0; t < dEt.cols(); ++t) {
        if (c.norms[t] == 0.0)
            continue;
        const auto e = c.E.col(t);
        dH2.col(t) = (dEt.col(t) - e * e.dot(dEt.col(t))) / c.norms[t];
    }
    g.W2 += dH2 * c.H1.transpose();
    g.b2 += dH2.rowwise().sum();
    Eigen::MatrixXd dZ1 = (m.W2.transpose() * dH2).cwiseProduct((c.Z1.array() > 0.0).cast<double>().matrix());
    g.W1 += dZ1 * c.X.transpose();
    g.b1 += dZ1.rowwise().sum();
}

void finish_predictor_grad(const RelevanceModel& m, const Eigen::VectorXd& dp_unit, RelevanceModel& g) {
    const double n = m.p.norm();
    if (n == 0.0)
        return;
    const Eigen::VectorXd pt = m.p / n;
    g.p += (dp_unit - pt * pt.dot(dp_unit)) / n;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ (v + 0x9e37ULL)); }

std::uint64_t relu_pattern(const SeqCache& c) {
    std::uint64_t h = 0;
    for (Eigen::Index i = 0; i < c.Z1.size(); ++i)
        h = mix(h, c.Z1.data()[i] > 0.0 ? 1 : 0);
    return h;
}

/// Shared implementation of the matching/regulariser objective.
double pair_objective(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                      const RelevanceLossOptions& opts, RelevanceModel* grad, std::uint64_t* pattern) {
    if (pairs.empty())
        throw InvalidArgument("loss over an empty batch");

    std::unordered_map<const SimilaritySample*, std::size_t> slot;
    std::vector<const SimilaritySample*> samples;
    for (const auto& pr : pairs) {
        for (const SimilaritySample* s : {&pr.first(), &pr.second()}) {
            if (slot.emplace(s, samples.size()).second)
                samples.push_back(s);
        }
    }
    std::vector<SeqCache> cache;
    cache.reserve(samples.size());
    for (const auto* s : samples)
        cache.push_back(forward(m, s->sequence.as_matrix()));

    std::vector<double> d_mean_f(samples.size(), 0.0);
    std::vector<Eigen::VectorXd> d_mean_e(samples.size(), Eigen::VectorXd::Zero(m.hidden()));

    const double scale = 1.0 / static_cast<double>(pairs.size());
    double total = 0.0;
    std::uint64_t pat = 0;
    for (const auto& pr : pairs) {
        const std::size_t i = slot.at(&pr.first());
        const std::size_t j = slot.at(&pr.second());
        const double target = h_vid(pr.first().text_score, pr.second().text_score, opts.beta);
        const double x = cache[i].mean_f - cache[j].mean_f;
        // Cross-entropy in logit form: -t log s(x) - (1-t) log s(-x).
        total += -target * log_sigmoid(x) - (1.0 - target) * log_sigmoid(-x);
        const double dx = (sigmoid(x) - target) * scale;
        d_mean_f[i] += dx;
        d_mean_f[j] -= dx;

        if (opts.reg_weight != 0.0) {
            const double r = pr.clip_similarity() - cache[i].mean_e.dot(cache[j].mean_e);
            total += opts.reg_weight * std::abs(r);
            const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            pat = mix(pat, r > 0.0 ? 1 : 0);
            const double w = -opts.reg_weight * sgn * scale;
            d_mean_e[i] += w * cache[j].mean_e;
            d_mean_e[j] += w * cache[i].mean_e;
        }
    }

    if (pattern != nullptr) {
        for (const auto& c : cache)
            pat = mix(pat, relu_pattern(c));
        *pattern = pat;
    }

    if (grad != nullptr) {
        Eigen::VectorXd dp_unit = Eigen::VectorXd::Zero(m.hidden());
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const auto n = static_cast<double>(cache[k].f.size());
            const Eigen::VectorXd dF = Eigen::VectorXd::Constant(cache[k].f.size(), d_mean_f[k] / n);
            const Eigen::MatrixXd dE = (d_mean_e[k] / n).replicate(1, cache[k].f.size());
            backward(m, cache[k], dF, dE, dp_unit, *grad);
        }
        finish_predictor_grad(m, dp_unit, *grad);
    }
    return total * scale;
}

double regression_objective(const RelevanceModel& m, std::span<const SimilaritySample* const> batch,
                            bool per_frame, RelevanceModel* grad) {
    if (batch.empty())
        throw InvalidArgument("loss over an empty batch");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto* s : batch)
        count += per_frame ? std::min(s->frame_scores.size(), s->sequence.length()) : 1;
    if (count == 0)
        throw InvalidArgument("regression batch has no targets");
    const double scale = 1.0 / static_cast<double>(count);

    Eigen::VectorXd dp_unit = Eigen::VectorXd::Zero(m.hidden());
    for (const auto* s : batch) {
        const SeqCache c = forward(m, s->sequence.as_matrix());
        const auto n = c.f.size();
        Eigen::VectorXd dF = Eigen::VectorXd::Zero(n);
        if (per_frame) {
            const auto used = static_cast<Eigen::Index>(std::min<std::size_t>(s->frame_scores.size(), static_cast<std::size_t>(n)));
            for (Eigen::Index t = 0; t < used; ++t) {
                const double r = c.f[t] - s->frame_scores[static_cast<std::size_t>(t)];
                total += r * r;
                dF[t] = 2.0 * r * scale;
            }
        } else {
            const double r = c.mean_f - s->text_score;
            total += r * r;
            dF.setConstant(2.0 * r * scale / static_cast<double>(n));
        }
        if (grad != nullptr)
            backward(m, c, dF, Eigen::MatrixXd::Zero(m.hidden(), n), dp_unit, *grad);
    }
    if (grad != nullptr)
        finish_predictor_grad(m, dp_unit, *grad);
    return total * scale;
}

template <class Fill>
void fill_uniform(Eigen::MatrixXd& M, double bound, Fill&& draw) {
    for (Eigen::Index i = 0; i < M.size(); ++i)
        M.data()[i] = draw(-bound, bound);
}

}  // namespace

RelevanceModel RelevanceModel::init(int state_dim, int hidden, std::uint64_t seed) {
    if (state_dim < 1 || hidden < 1)
        throw InvalidArgument("relevance model dimensions must be positive");
    Rng rng = Rng::derived(seed, 0x7e1);
    auto draw = [&](double lo, double hi) { return rng.uniform(lo, hi); };
    RelevanceModel m;
    m.W1.resize(hidden, state_dim);
    m.b1.resize(hidden);
    m.W2.resize(hidden, hidden);
    m.b2.resize(hidden);
    m.p.resize(hidden);
    const double b_in = 1.0 / std::sqrt(static_cast<double>(state_dim));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    Eigen::MatrixXd b1(hidden, 1), b2(hidden, 1), p(hidden, 1);
    fill_uniform(m.W1, b_in, draw);
    fill_uniform(b1, b_in, draw);
    fill_uniform(m.W2, b_hid, draw);
    fill_uniform(b2, b_hid, draw);
    fill_uniform(p, std::sqrt(6.0 / static_cast<double>(hidden)), draw);
    m.b1 = b1.col(0);
    m.b2 = b2.col(0);
    m.p = p.col(0);
    return m;
}

RelevanceModel RelevanceModel::zeros_like(const RelevanceModel& m) {
    RelevanceModel g;
    g.W1 = Eigen::MatrixXd::Zero(m.W1.rows(), m.W1.cols());
    g.b1 = Eigen::VectorXd::Zero(m.b1.size());
    g.W2 = Eigen::MatrixXd::Zero(m.W2.rows(), m.W2.cols());
    g.b2 = Eigen::VectorXd::Zero(m.b2.size());
    g.p = Eigen::VectorXd::Zero(m.p.size());
    return g;
}

std::size_t RelevanceModel::num_params() const {
    return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size() + p.size());
}

std::vector<double> RelevanceModel::flat() const {
    std::vector<double> out;
    out.reserve(num_params());
    out.insert(out.end(), W1.data(), W1.data() + W1.size());
    out.insert(out.end(), b1.data(), b1.data() + b1.size());
    out.insert(out.end(), W2.data(), W2.data() + W2.size());
    out.insert(out.end(), b2.data(), b2.data() + b2.size());
    out.insert(out.end(), p.data(), p.data() + p.size());
    return out;
}

void RelevanceModel::set_flat(std::span<const double> values) {
    if (values.size() != num_params())
        throw InvalidArgument("parameter count mismatch");
    auto it = values.begin();
    for (Eigen::Index i = 0; i < W1.size(); ++i) W1.data()[i] = *it++;
    for (Eigen::Index i = 0; i < b1.size(); ++i) b1.data()[i] = *it++;
    for (Eigen::Index i = 0; i < W2.size(); ++i) W2.data()[i] = *it++;
    for (Eigen::Index i = 0; i < b2.size(); ++i) b2.data()[i] = *it++;
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = *it++;
}

bool RelevanceModel::all_finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite() && p.allFinite();
}

namespace {

// Single-state inference. Batched inference goes through this too, one column at a time, so
// a state's relevance does not depend on what else is in the batch (GEMM and GEMV round
// differently).
Eigen::VectorXd embed_one(const RelevanceModel& m, const Eigen::Ref<const Eigen::VectorXd>& s) {
    const Eigen::VectorXd h1 = (m.W1 * s + m.b1).cwiseMax(0.0);
    Eigen::VectorXd h2 = m.W2 * h1 + m.b2;
    const double n = h2.norm();
    if (n > 0.0)
        return h2 / n;
    return Eigen::VectorXd::Zero(h2.size());
}

}  // namespace

double f_mvr(const RelevanceModel& m, const StateVec& s) {
    if (s.size() != m.state_dim())
        throw InvalidArgument("state dimension does not match the relevance model");
    return unit_predictor(m).dot(embed_one(m, s));
}

Eigen::VectorXd state_embedding(const RelevanceModel& m, const StateVec& s) {
    if (s.size() != m.state_dim())
        throw InvalidArgument("state dimension does not match the relevance model");
    return embed_one(m, s);
}

Eigen::VectorXd f_mvr_batch(const RelevanceModel& m, const Eigen::MatrixXd& states) {
    if (states.rows() != m.state_dim())
        throw InvalidArgument("state dimension does not match the relevance model");
    const Eigen::VectorXd pt = unit_predictor(m);
    Eigen::VectorXd f(states.cols());
    for (Eigen::Index t = 0; t < states.cols(); ++t)
        f[t] = pt.dot(embed_one(m, states.col(t)));
    return f;
}

Eigen::VectorXd encode_seq_mean(const RelevanceModel& m, const StateSequence& seq) {
    return forward(m, seq.as_matrix()).mean_e;
}

double mean_relevance(const RelevanceModel& m, const StateSequence& seq) {
    return forward(m, seq.as_matrix()).mean_f;
}

double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    if (x >= 0.0)
        return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double h_vid(double score_i, double score_j, double beta) {
    if (!std::isfinite(score_i) || !std::isfinite(score_j))
        throw InvalidArgument("similarity scores must be finite");
    return sigmoid(beta * (score_i - score_j));
}

double h_state(const RelevanceModel& m, const StateSequence& seq_i, const StateSequence& seq_j) {
    return sigmoid(mean_relevance(m, seq_i) - mean_relevance(m, seq_j));
}

double binary_cross_entropy(double target, double predicted) {
    return -target * std::log(predicted) - (1.0 - target) * std::log1p(-predicted);
}

ComparisonPair::ComparisonPair(const SimilaritySample& a, const SimilaritySample& b) : a_(&a), b_(&b) {
    if (&a == &b)
        throw InvalidArgument("comparison pair needs two distinct samples");
}

double ComparisonPair::clip_similarity() const {
    return std::clamp(a_->clip_embedding.dot(b_->clip_embedding), -1.0, 1.0);
}

double loss_matching(const RelevanceModel& m, const ComparisonPair& pair, double beta) {
    const double x = mean_relevance(m, pair.first().sequence) - mean_relevance(m, pair.second().sequence);
    const double t = h_vid(pair.first().text_score, pair.second().text_score, beta);
    return -t * log_sigmoid(x) - (1.0 - t) * log_sigmoid(-x);
}

double loss_reg(const RelevanceModel& m, const ComparisonPair& pair) {
    const Eigen::VectorXd gi = encode_seq_mean(m, pair.first().sequence);
    const Eigen::VectorXd gj = encode_seq_mean(m, pair.second().sequence);
    return std::abs(pair.clip_similarity() - gi.dot(gj));
}

double loss_total(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                  const RelevanceLossOptions& opts) {
    return pair_objective(m, pairs, opts, nullptr, nullptr);
}

double loss_total_grad(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                       const RelevanceLossOptions& opts, RelevanceModel* grad) {
    return pair_objective(m, pairs, opts, grad, nullptr);
}

double loss_direct_grad(const RelevanceModel& m, std::span<const SimilaritySample* const> batch,
                        RelevanceModel* grad) {
    return regression_objective(m, batch, false, grad);
}

double loss_image_grad(const RelevanceModel& m, std::span<const SimilaritySample* const> batch,
                       RelevanceModel* grad) {
    return regression_objective(m, batch, true, grad);
}

GradCheckResult grad_check(const RelevanceModel& m, std::span<const ComparisonPair> pairs,
                           double epsilon, const RelevanceLossOptions& opts, double floor) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
        throw InvalidArgument("grad_check epsilon must lie in [1e-7, 1e-3]");
    RelevanceModel grad = RelevanceModel::zeros_like(m);
    std::uint64_t base_pattern = 0;
    pair_objective(m, pairs, opts, &grad, &base_pattern);
    const std::vector<double> analytic = grad.flat();
    std::vector<double> params = m.flat();

    GradCheckResult res;
    RelevanceModel probe = m;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double orig = params[k];
        std::uint64_t pat_plus = 0, pat_minus = 0;
        params[k] = orig + epsilon;
        probe.set_flat(params);
        const double lp = pair_objective(probe, pairs, opts, nullptr, &pat_plus);
        params[k] = orig - epsilon;
        probe.set_flat(params);
        const double lm = pair_objective(probe, pairs, opts, nullptr, &pat_minus);
        params[k] = orig;
        if (pat_plus != base_pattern || pat_minus != base_pattern) {
            ++res.skipped_kinks;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double a = analytic[k];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
        ++res.checked;
    }
    return res;
}

double LearningRateSchedule::at(double progress) const {
    progress = std::clamp(progress, 0.0, 1.0);
    return start + (end - start) * progress;
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate.start >= 0.0) || !(cfg.learning_rate.end >= 0.0))
        throw InvalidArgument("learning rate must be non-negative");
    if (cfg.batch_size == 0 || cfg.steps_per_epoch == 0)
        throw InvalidArgument("batch_size and steps_per_epoch must be positive");
    if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0)
        throw InvalidArgument("holdout_fraction must lie in [0, 1)");
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::span<const std::size_t> pool,
                                                              std::size_t count, Rng& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t n = pool.size();
    if (n < 2)
        return out;
    const std::size_t total = n * (n - 1);
    if (count >= total) {
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                if (a != b)
                    out.emplace_back(pool[a], pool[b]);
        return out;
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    while (out.size() < count) {
        const std::size_t a = rng.index(n);
        std::size_t b = rng.index(n - 1);
        if (b >= a)
            ++b;
        if (seen.emplace(a, b).second)
            out.emplace_back(pool[a], pool[b]);
    }
    return out;
}

namespace {

/// Evaluates (and optionally differentiates) the configured objective on a batch of sample
/// indices or index pairs.
struct ObjectiveRunner {
    const RewardDataset& d;
    const TrainConfig& cfg;

    double on_pairs(const RelevanceModel& m, const std::vector<std::pair<std::size_t, std::size_t>>& idx,
                    RelevanceModel* grad) const {
        std::vector<ComparisonPair> pairs;
        pairs.reserve(idx.size());
        for (auto [a, b] : idx)
            pairs.emplace_back(d[a], d[b]);
        return pair_objective(m, pairs, RelevanceLossOptions{cfg.beta, cfg.reg_weight}, grad, nullptr);
    }

    double on_samples(const RelevanceModel& m, std::span<const std::size_t> idx, RelevanceModel* grad) const {
        std::vector<const SimilaritySample*> batch;
        batch.reserve(idx.size());
        for (auto i : idx)
            batch.push_back(&d[i]);
        return cfg.objective == RelevanceObjective::Direct ? loss_direct_grad(m, batch, grad)
                                                           : loss_image_grad(m, batch, grad);
    }
};

void sgd_step(RelevanceModel& m, const RelevanceModel& g, double lr) {
    m.W1 -= lr * g.W1;
    m.b1 -= lr * g.b1;
    m.W2 -= lr * g.W2;
    m.b2 -= lr * g.b2;
    m.p -= lr * g.p;
}

}  // namespace

RelevanceModel train_relevance(RelevanceModel m, const RewardDataset& d, const TrainConfig& cfg,
                               Rng& rng, TrainReport* report) {
    validate(cfg);
    if (d.size() < 2)
        throw InvalidArgument("relevance training needs at least two samples");
    if (d[0].sequence.state_dim() != m.state_dim())
        throw InvalidArgument("dataset states do not match the relevance model");

    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::size_t n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(d.size())));
    if (cfg.holdout_fraction > 0.0 && n_hold == 0 && d.size() >= 4)
        n_hold = 1;
    const std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    const std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());

    const bool pairwise = cfg.objective == RelevanceObjective::Matching;
    ObjectiveRunner run{d, cfg};

    // Held-out pairs compare each held-out sample against every other sample.
    std::vector<std::pair<std::size_t, std::size_t>> hold_pairs;
    for (auto h : hold)
        for (std::size_t j = 0; j < d.size(); ++j)
            if (j != h)
                hold_pairs.emplace_back(h, j);
    auto holdout_loss = [&](const RelevanceModel& model) {
        if (hold.empty())
            return pairwise ? run.on_pairs(model, sample_pairs(train, 4 * cfg.batch_size, rng), nullptr)
                            : run.on_samples(model, train, nullptr);
        return pairwise ? run.on_pairs(model, hold_pairs, nullptr) : run.on_samples(model, hold, nullptr);
    };

    TrainReport rep;
    rep.initial_holdout_loss = holdout_loss(m);
    rep.best_holdout_loss = rep.initial_holdout_loss;
    RelevanceModel best = m;
    std::size_t since_best = 0;
    const double total_steps = static_cast<double>(cfg.max_epochs * cfg.steps_per_epoch);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
            RelevanceModel g = RelevanceModel::zeros_like(m);
            double loss = 0.0;
            if (pairwise) {
                loss = run.on_pairs(m, sample_pairs(train, cfg.batch_size, rng), &g);
            } else {
                std::vector<std::size_t> batch;
                const std::size_t bs = std::min(cfg.batch_size, train.size());
                std::vector<std::size_t> pool = train;
                std::shuffle(pool.begin(), pool.end(), rng.engine());
                batch.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(bs));
                loss = run.on_samples(m, batch, &g);
            }
            if (!std::isfinite(loss) || !g.all_finite()) {
                rep.finite = false;
                break;
            }
            sgd_step(m, g, cfg.learning_rate.at(static_cast<double>(rep.steps) / std::max(1.0, total_steps - 1.0)));
            ++rep.steps;
        }
        ++rep.epochs;
        if (!rep.finite)
            break;
        const double h = holdout_loss(m);
        if (h < rep.best_holdout_loss) {
            rep.best_holdout_loss = h;
            best = m;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
            rep.stopped_early = true;
            break;
        }
    }
    if (report != nullptr)
        *report = rep;
    return best;
}

}  // namespace mvrlab
