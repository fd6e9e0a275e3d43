#pragma once

#include "mvrlab/envs.hpp"
#include "mvrlab/nn.hpp"
#include "mvrlab/relevance.hpp"
#include "mvrlab/replay.hpp"
#include "mvrlab/shaping.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mvrlab {

struct AgentConfig {
    double gamma = 0.99;
    double tau = 0.01;
    std::size_t batch_size = 64;
    std::size_t gradient_steps = 4;
    /// Environment steps between update rounds of `gradient_steps` updates.
    std::size_t update_every = 16;
    double exploration_noise_std = 0.1;
    /// AR(1) coefficient of the exploration noise; 0 gives independent Gaussian draws. The
    /// stationary std is exploration_noise_std for any value in [0, 1).
    double noise_correlation = 0.0;
    std::vector<int> actor_hidden{64, 64};
    std::vector<int> critic_hidden{64, 64};
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    bool twin_critic = false;
    /// Weight of mean ||pre-tanh actor output||^2 added to the actor loss.
    double preactivation_penalty = 0.05;
    /// Uniform random actions are taken for this many environment steps.
    std::size_t warmup_steps = 1000;
    std::size_t buffer_capacity = 100000;
};

void validate(const AgentConfig& cfg);

enum class RewardVariant { Mvr, TaskOnly, ImageSim, TrajSparse, MvrNoReg, MvrNoReference, MvrDirect };

std::string to_string(RewardVariant v);
RewardVariant parse_reward_variant(const std::string& name);
const std::vector<RewardVariant>& all_reward_variants();

/// What a reward provider may read. `model` is the relevance model, or the per-frame
/// regressor for the image-similarity baseline.
struct RewardContext {
    const RelevanceModel* model = nullptr;
    const ReferenceRelevance* reference = nullptr;
    ShapingConfig shaping;
    std::uint64_t run_seed = 0;
    /// False until the model has been fitted at least once.
    bool model_ready = false;
    /// Periodic relabelling: read the entries' stored shaped reward instead of recomputing.
    bool use_stored_shaping = false;
};

class RewardProvider {
  public:
    explicit RewardProvider(RewardVariant variant = RewardVariant::Mvr) : variant_(variant) {}

    RewardVariant variant() const { return variant_; }
    bool uses_model() const;
    bool uses_reference() const;

    double provide(const BufferEntry& e, const RewardContext& ctx) const;
    /// Same values as provide() for each index, with the model evaluated in one batch.
    std::vector<double> provide_batch(const ReplayBuffer& buffer, std::span<const std::size_t> idx,
                                      const RewardContext& ctx) const;

  private:
    double combine(const BufferEntry& e, double f_next, const RewardContext& ctx) const;

    RewardVariant variant_;
};

double provide_reward(const RewardProvider& provider, const Transition& tr, const RewardContext& ctx,
                      double episode_bonus = 0.0);

struct UpdateStats {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
    double mean_reward = 0.0;
};

/// Deterministic actor-critic with target networks (DDPG-style), optionally with twin critics.
class DdpgAgent {
  public:
    DdpgAgent(int state_dim, int action_dim, AgentConfig cfg, std::uint64_t seed);

    /// tanh-squashed actor output, plus clipped Gaussian noise when exploring.
    Eigen::VectorXd act(const StateVec& s, bool explore);
    Eigen::VectorXd act_greedy(const StateVec& s) const;
    Eigen::VectorXd random_action();
    /// Redraws the correlated noise state; called at episode start.
    void reset_noise();

    /// One critic step, one actor step and a soft target update on a sampled batch.
    UpdateStats update(const ReplayBuffer& buffer, const RewardProvider& provider, const RewardContext& ctx);

    /// Critic regression inputs [s; a] and TD targets for the given entries.
    void critic_batch(const ReplayBuffer& buffer, std::span<const std::size_t> idx,
                      std::span<const double> rewards, Eigen::MatrixXd& X, Eigen::MatrixXd& Y) const;

    Mlp& actor() { return actor_; }
    Mlp& critic() { return critic_; }
    Mlp& actor_target() { return actor_target_; }
    Mlp& critic_target() { return critic_target_; }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    const Mlp& actor_target() const { return actor_target_; }
    const Mlp& critic_target() const { return critic_target_; }
    const AgentConfig& config() const { return cfg_; }
    int state_dim() const { return state_dim_; }
    int action_dim() const { return action_dim_; }

  private:
    Eigen::MatrixXd policy(const Mlp& net, const Eigen::MatrixXd& S) const;

    int state_dim_;
    int action_dim_;
    AgentConfig cfg_;
    Rng rng_;
    Eigen::VectorXd noise_;
    Mlp actor_, actor_target_;
    Mlp critic_, critic_target_;
    Mlp critic2_, critic2_target_;
    Adam actor_opt_, critic_opt_, critic2_opt_;
};

struct EpisodeRecord {
    StateSequence states;  // includes the reset state
    std::vector<double> task_rewards;
    bool success = false;
};

/// Runs one episode; `noise_std` < 0 means greedy.
EpisodeRecord rollout(const DdpgAgent& agent, const EnvSpec& spec, double noise_std, Rng& rng,
                      std::int64_t episode_id = 0);

struct EvalResult {
    double mean_return = 0.0;
    double std_return = 0.0;
    double success_rate = 0.0;
    /// Cycler: mean per-step phase increment over the success window. Zero for seat.
    double mean_phase_rate = 0.0;
    std::vector<double> returns;
    std::vector<EpisodeRecord> episodes;
};

/// Greedy rollouts scored on the task reward only.
EvalResult evaluate(const DdpgAgent& agent, const EnvSpec& spec, std::size_t n_episodes);

double mean_phase_rate(const EnvSpec& spec, const StateSequence& seq);

}  // namespace mvrlab
