#pragma once

#include "mvrlab/core.hpp"
#include "mvrlab/envs.hpp"

#include <array>
#include <functional>
#include <map>
#include <string>

namespace mvrlab {

struct OracleConfig {
    std::array<double, ViewId::kMaxViews> view_bias{0.10, 0.00, -0.05, 0.00};
    double noise_std = 0.02;
    int embed_dim = 16;
    std::uint64_t rng_seed = 0;
};

void validate(const OracleConfig& cfg);

/// The similarity-model role: scores clips against a prompt and against each other.
class SimilarityOracle {
  public:
    virtual ~SimilarityOracle() = default;

    virtual double score_text(const RenderedClip& clip, const TaskPrompt& prompt) const = 0;
    virtual Eigen::VectorXd embed(const RenderedClip& clip) const = 0;
    /// Single-frame score, used by the image-similarity baseline.
    virtual double image_score(const RenderedClip& clip, std::size_t frame,
                               const TaskPrompt& prompt) const = 0;

    double score_pair(const RenderedClip& a, const RenderedClip& b) const;
};

/// Ground-truth motion quality read from the clip, plus per-view bias and content-seeded
/// Gaussian noise.
class SyntheticOracle final : public SimilarityOracle {
  public:
    using QualityFunction = std::function<double(const EnvSpec&, const RenderedClip&)>;

    SyntheticOracle(OracleConfig cfg, EnvSpec env);

    double score_text(const RenderedClip& clip, const TaskPrompt& prompt) const override;
    Eigen::VectorXd embed(const RenderedClip& clip) const override;
    double image_score(const RenderedClip& clip, std::size_t frame,
                       const TaskPrompt& prompt) const override;

    /// Noise-free quality q(clip) for a registered prompt.
    double quality(const RenderedClip& clip, const TaskPrompt& prompt) const;
    /// The noise term that score_text adds for this clip.
    double noise(const RenderedClip& clip) const;

    bool has_prompt(const std::string& text) const { return quality_.count(text) != 0; }
    const OracleConfig& config() const { return cfg_; }
    const EnvSpec& env() const { return env_; }

  private:
    const QualityFunction& lookup(const TaskPrompt& prompt) const;

    OracleConfig cfg_;
    EnvSpec env_;
    Eigen::MatrixXd embed_proj_;
    std::map<std::string, QualityFunction> quality_;
};

/// Default prompt for each environment ("running" for cycler, "sitting" for seat).
TaskPrompt default_prompt(const EnvSpec& env);

}  // namespace mvrlab
