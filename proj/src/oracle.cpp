#include "mvrlab/oracle.hpp"

#include "mvrlab/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mvrlab {

namespace {

constexpr double kRunningPhaseScale = 0.25;
constexpr std::size_t kSittingFrames = 16;
constexpr std::uint64_t kEmbedStream = 0xe4bed;
constexpr std::uint64_t kNoiseStream = 0x401fe;

double running_quality(const EnvSpec& env, const RenderedClip& clip) {
    if (clip.length() < 2)
        return 0.0;
    double total = 0.0;
    double prev = unproject(env, clip.view, clip.frames[0])[0];
    for (std::size_t t = 1; t < clip.length(); ++t) {
        const double cur = unproject(env, clip.view, clip.frames[t])[0];
        total += phase_increment(prev, cur);
        prev = cur;
    }
    const double mean = total / static_cast<double>(clip.length() - 1);
    return std::clamp(mean / kRunningPhaseScale, 0.0, 1.0);
}

double sitting_quality(const EnvSpec& env, const RenderedClip& clip) {
    const std::size_t n = std::min(kSittingFrames, clip.length());
    if (n == 0)
        return 0.0;
    std::size_t good = 0;
    for (std::size_t t = clip.length() - n; t < clip.length(); ++t) {
        const Eigen::VectorXd s = unproject(env, clip.view, clip.frames[t]);
        if (in_seat_region(env.seat, s[0], s[1]) && s.tail<2>().norm() < env.seat.settle_speed)
            ++good;
    }
    return static_cast<double>(good) / static_cast<double>(n);
}

std::uint64_t clip_hash(const RenderedClip& clip, std::uint64_t seed) {
    std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(clip.view.index + 1));
    for (const auto& f : clip.frames)
        h = hash_doubles(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), h);
    return h;
}

double seeded_normal(std::uint64_t h, double stddev) {
    if (stddev == 0.0)
        return 0.0;
    Rng rng(h);
    return rng.normal(0.0, stddev);
}

}  // namespace

void validate(const OracleConfig& cfg) {
    if (!(cfg.noise_std >= 0.0))
        throw InvalidArgument("oracle noise_std must be non-negative");
    if (cfg.embed_dim < 2)
        throw InvalidArgument("oracle embed_dim must be at least 2");
    for (double b : cfg.view_bias)
        if (!std::isfinite(b))
            throw InvalidArgument("oracle view bias must be finite");
}

double SimilarityOracle::score_pair(const RenderedClip& a, const RenderedClip& b) const {
    return std::clamp(embed(a).dot(embed(b)), -1.0, 1.0);
}

TaskPrompt default_prompt(const EnvSpec& env) {
    return TaskPrompt{env.is_cycler() ? "running" : "sitting"};
}

SyntheticOracle::SyntheticOracle(OracleConfig cfg, EnvSpec env) : cfg_(cfg), env_(std::move(env)) {
    validate(cfg_);
    validate(env_);
    Rng rng = Rng::derived(cfg_.rng_seed, kEmbedStream);
    embed_proj_.resize(cfg_.embed_dim, 2 * env_.state_dim);
    for (Eigen::Index i = 0; i < embed_proj_.rows(); ++i)
        for (Eigen::Index j = 0; j < embed_proj_.cols(); ++j)
            embed_proj_(i, j) = rng.normal();

    if (env_.is_cycler())
        quality_["running"] = running_quality;
    else
        quality_["sitting"] = sitting_quality;
}

const SyntheticOracle::QualityFunction& SyntheticOracle::lookup(const TaskPrompt& prompt) const {
    auto it = quality_.find(prompt.text);
    if (it == quality_.end())
        throw InvalidArgument("prompt '" + prompt.text + "' is not registered with the oracle");
    return it->second;
}

double SyntheticOracle::quality(const RenderedClip& clip, const TaskPrompt& prompt) const {
    return lookup(prompt)(env_, clip);
}

double SyntheticOracle::noise(const RenderedClip& clip) const {
    return seeded_normal(clip_hash(clip, Rng::derived(cfg_.rng_seed, kNoiseStream).next()),
                         cfg_.noise_std);
}

double SyntheticOracle::score_text(const RenderedClip& clip, const TaskPrompt& prompt) const {
    const double q = quality(clip, prompt);
    return std::clamp(q + cfg_.view_bias[clip.view.index] + noise(clip), 0.0, 1.0);
}

double SyntheticOracle::image_score(const RenderedClip& clip, std::size_t frame,
                                    const TaskPrompt& prompt) const {
    lookup(prompt);
    if (frame >= clip.length())
        throw InvalidArgument("frame index out of range");
    const Eigen::VectorXd s = unproject(env_, clip.view, clip.frames[frame]);
    double q = 0.0;
    if (prompt.text == "running") {
        q = (std::cos(s[0] - std::numbers::pi / 2.0) + 1.0) / 2.0;
    } else {
        q = 1.0 - (s.head<2>() - env_.seat.chair_center).norm();
    }
    const auto& f = clip.frames[frame];
    const std::uint64_t h =
        hash_doubles(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())),
                     Rng::derived(cfg_.rng_seed, kNoiseStream + 1).next() + static_cast<std::uint64_t>(clip.view.index));
    return std::clamp(q + cfg_.view_bias[clip.view.index] + seeded_normal(h, cfg_.noise_std), 0.0, 1.0);
}

Eigen::VectorXd SyntheticOracle::embed(const RenderedClip& clip) const {
    const int d = env_.state_dim;
    if (clip.frame_dim() != d)
        throw InvalidArgument("clip frame dimension does not match the oracle environment");
    Eigen::VectorXd features = Eigen::VectorXd::Zero(2 * d);
    for (const auto& f : clip.frames)
        features.head(d) += f;
    features.head(d) /= static_cast<double>(clip.length());
    if (clip.length() > 1) {
        for (std::size_t t = 1; t < clip.length(); ++t)
            features.tail(d) += (clip.frames[t] - clip.frames[t - 1]).cwiseAbs();
        features.tail(d) /= static_cast<double>(clip.length() - 1);
    }
    Eigen::VectorXd e = embed_proj_ * features;
    const double n = e.norm();
    if (n == 0.0) {
        e.setZero();
        e[0] = 1.0;
        return e;
    }
    return e / n;
}

}  // namespace mvrlab
