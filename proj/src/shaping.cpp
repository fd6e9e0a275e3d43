#include "mvrlab/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvrlab {

void validate(const ShapingConfig& cfg) {
    if (!(cfg.w >= 0.0) || !std::isfinite(cfg.w))
        throw InvalidArgument("shaping weight w must be a finite non-negative number");
}

ReferenceRelevance::ReferenceRelevance(const RelevanceModel& m, const ReferenceSet& ref) {
    for (const auto& e : ref.entries())
        for (const auto& s : e.sequence.states())
            states_.push_back(s);
    if (states_.empty())
        return;
    Eigen::MatrixXd X(m.state_dim(), static_cast<Eigen::Index>(states_.size()));
    for (std::size_t i = 0; i < states_.size(); ++i)
        X.col(static_cast<Eigen::Index>(i)) = states_[i];
    const Eigen::VectorXd f = f_mvr_batch(m, X);
    values_.assign(f.data(), f.data() + f.size());
}

VlmReward r_vlm_from_values(double f_s, const ReferenceRelevance& ref, const ShapingConfig& cfg,
                            std::uint64_t draw_seed) {
    if (ref.empty())
        return {};
    const auto vals = ref.values();
    double total = 0.0;
    std::size_t n = 0;
    if (cfg.m_ref == 0) {
        for (double v : vals)
            total += log_sigmoid(f_s - v);
        n = vals.size();
    } else {
        Rng rng(draw_seed);
        for (std::size_t k = 0; k < cfg.m_ref; ++k)
            total += log_sigmoid(f_s - vals[rng.index(vals.size())]);
        n = cfg.m_ref;
    }
    return {total / static_cast<double>(n), true};
}

VlmReward r_vlm(const RelevanceModel& m, const StateVec& s, const ReferenceSet& ref,
                const ShapingConfig& cfg, std::uint64_t draw_seed) {
    if (ref.empty())
        return {};
    return r_vlm_from_values(f_mvr(m, s), ReferenceRelevance(m, ref), cfg, draw_seed);
}

double r_mvr(double task_reward, double vlm_reward, double w) { return task_reward + w * vlm_reward; }

std::uint64_t transition_draw_seed(std::uint64_t run_seed, std::uint64_t serial) {
    return splitmix64(splitmix64(run_seed ^ 0x5eedULL) + serial);
}

void relabel_buffer(ReplayBuffer& buffer, const RelevanceModel& m, const ReferenceSet& ref,
                    const ShapingConfig& cfg, std::uint64_t run_seed) {
    if (buffer.empty())
        return;
    const ReferenceRelevance cache(m, ref);
    Eigen::MatrixXd X(m.state_dim(), static_cast<Eigen::Index>(buffer.size()));
    for (std::size_t i = 0; i < buffer.size(); ++i)
        X.col(static_cast<Eigen::Index>(i)) = buffer.at(i).next_state;
    const Eigen::VectorXd f = f_mvr_batch(m, X);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        BufferEntry& e = buffer.at(i);
        const VlmReward v = r_vlm_from_values(f[static_cast<Eigen::Index>(i)], cache, cfg,
                                              transition_draw_seed(run_seed, e.serial));
        e.shaped_reward = r_mvr(e.task_reward, v.value, cfg.w);
    }
}

JensenGap jensen_gap(std::span<const double> learner_f, std::span<const double> reference_f) {
    if (learner_f.empty() || reference_f.empty())
        throw InvalidArgument("jensen_gap needs non-empty samples");
    const double ml = std::accumulate(learner_f.begin(), learner_f.end(), 0.0) / static_cast<double>(learner_f.size());
    const double mr =
        std::accumulate(reference_f.begin(), reference_f.end(), 0.0) / static_cast<double>(reference_f.size());
    JensenGap g;
    g.lhs = log_sigmoid(ml - mr);
    double total = 0.0;
    for (double a : learner_f)
        for (double b : reference_f)
            total += log_sigmoid(a - b);
    g.rhs = total / static_cast<double>(learner_f.size() * reference_f.size());
    return g;
}

JensenGap jensen_gap(const RelevanceModel& m, std::span<const StateVec> learner_states,
                     const ReferenceSet& ref) {
    if (learner_states.empty())
        throw InvalidArgument("jensen_gap needs learner states");
    const ReferenceRelevance cache(m, ref);
    if (cache.empty())
        throw InvalidArgument("jensen_gap needs a non-empty reference set");
    std::vector<double> lf;
    lf.reserve(learner_states.size());
    for (const auto& s : learner_states)
        lf.push_back(f_mvr(m, s));
    return jensen_gap(lf, cache.values());
}

double policy_relevance(std::span<const std::vector<double>> episode_f, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw InvalidArgument("gamma must lie in (0, 1)");
    double num = 0.0;
    double den = 0.0;
    for (const auto& ep : episode_f) {
        double w = 1.0;
        for (double f : ep) {
            num += w * f;
            den += w;
            w *= gamma;
        }
    }
    if (den == 0.0)
        throw InvalidArgument("policy_relevance needs at least one visited state");
    return num / den;
}

double policy_relevance(const RelevanceModel& m, std::span<const StateSequence> episodes, double gamma) {
    std::vector<std::vector<double>> ef;
    ef.reserve(episodes.size());
    for (const auto& ep : episodes) {
        const Eigen::VectorXd f = f_mvr_batch(m, ep.as_matrix());
        ef.emplace_back(f.data(), f.data() + f.size());
    }
    return policy_relevance(ef, gamma);
}

namespace {

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double std_of(std::span<const double> x) {
    const double mu = mean_of(x);
    double s = 0.0;
    for (double v : x)
        s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

DecayReport decay_metric(std::span<const double> history, std::size_t window) {
    if (window == 0 || history.size() < 2 * window)
        throw InvalidArgument("decay_metric needs a history spanning at least two windows");
    const auto first = history.first(window);
    const auto last = history.last(window);
    DecayReport r;
    r.first_std = std_of(first);
    r.final_std = std_of(last);
    if (r.first_std == 0.0) {
        r.degenerate = true;
        r.std_ratio = 1.0;
    } else {
        r.std_ratio = r.final_std / r.first_std;
    }
    auto mean_abs = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x)
            s += std::abs(v);
        return s / static_cast<double>(x.size());
    };
    const double m0 = mean_abs(first);
    r.mean_magnitude_ratio = m0 == 0.0 ? 1.0 : mean_abs(last) / m0;
    return r;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw InvalidArgument("pearson inputs differ in length");
    if (x.size() < 2)
        return std::nullopt;
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0)
        return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ShapingDiagnostics correlation_report(std::span<const EpisodeSummary> episodes) {
    if (episodes.size() < 2)
        throw InvalidArgument("correlation_report needs at least two episodes");
    std::vector<double> fv, fm, rm, rt, succ;
    for (const auto& e : episodes) {
        fv.push_back(e.mean_f_vlm);
        fm.push_back(e.mean_f_mvr);
        rm.push_back(e.mean_r_mvr);
        rt.push_back(e.mean_r_task);
        succ.push_back(e.success ? 1.0 : 0.0);
    }
    ShapingDiagnostics d;
    d.corr_f_vlm_success = pearson(fv, succ);
    d.corr_f_mvr_success = pearson(fm, succ);
    d.corr_r_mvr_success = pearson(rm, succ);
    d.corr_r_task_success = pearson(rt, succ);
    d.corr_f_vlm_task = pearson(fv, rt);
    d.corr_f_mvr_task = pearson(fm, rt);
    d.corr_r_mvr_task = pearson(rm, rt);
    return d;
}

}  // namespace mvrlab
