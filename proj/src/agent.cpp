#include "mvrlab/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvrlab {

void validate(const AgentConfig& cfg) {
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0))
        throw InvalidArgument("gamma must lie in (0, 1)");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0))
        throw InvalidArgument("tau must lie in (0, 1]");
    if (cfg.batch_size == 0 || cfg.update_every == 0 || cfg.buffer_capacity == 0)
        throw InvalidArgument("batch_size, update_every and buffer_capacity must be positive");
    if (cfg.exploration_noise_std < 0.0)
        throw InvalidArgument("exploration noise must be non-negative");
    if (!(cfg.noise_correlation >= 0.0 && cfg.noise_correlation < 1.0))
        throw InvalidArgument("noise_correlation must lie in [0, 1)");
    if (cfg.preactivation_penalty < 0.0)
        throw InvalidArgument("preactivation_penalty must be non-negative");
    if (cfg.actor_lr < 0.0 || cfg.critic_lr < 0.0)
        throw InvalidArgument("learning rates must be non-negative");
}

std::string to_string(RewardVariant v) {
    switch (v) {
    case RewardVariant::Mvr: return "mvr";
    case RewardVariant::TaskOnly: return "task_only";
    case RewardVariant::ImageSim: return "image_sim";
    case RewardVariant::TrajSparse: return "traj_sparse";
    case RewardVariant::MvrNoReg: return "mvr_no_reg";
    case RewardVariant::MvrNoReference: return "mvr_no_reference";
    case RewardVariant::MvrDirect: return "mvr_direct";
    }
    return "unknown";
}

const std::vector<RewardVariant>& all_reward_variants() {
    static const std::vector<RewardVariant> all{
        RewardVariant::Mvr,      RewardVariant::TaskOnly,       RewardVariant::ImageSim, RewardVariant::TrajSparse,
        RewardVariant::MvrNoReg, RewardVariant::MvrNoReference, RewardVariant::MvrDirect};
    return all;
}

RewardVariant parse_reward_variant(const std::string& name) {
    for (auto v : all_reward_variants())
        if (to_string(v) == name)
            return v;
    throw InvalidArgument("unknown reward variant '" + name + "'");
}

bool RewardProvider::uses_model() const {
    return variant_ != RewardVariant::TaskOnly && variant_ != RewardVariant::TrajSparse;
}

bool RewardProvider::uses_reference() const {
    return variant_ == RewardVariant::Mvr || variant_ == RewardVariant::MvrNoReg ||
           variant_ == RewardVariant::MvrDirect;
}

double RewardProvider::combine(const BufferEntry& e, double f_next, const RewardContext& ctx) const {
    const double w = ctx.shaping.w;
    switch (variant_) {
    case RewardVariant::TaskOnly:
        return e.task_reward;
    case RewardVariant::TrajSparse:
        return e.done ? e.task_reward + w * e.episode_bonus : e.task_reward;
    case RewardVariant::ImageSim:
    case RewardVariant::MvrNoReference:
        return ctx.model_ready ? e.task_reward + w * f_next : e.task_reward;
    case RewardVariant::Mvr:
    case RewardVariant::MvrNoReg:
    case RewardVariant::MvrDirect: {
        if (ctx.use_stored_shaping)
            return e.shaped_reward;
        if (!ctx.model_ready || ctx.reference->empty())
            return e.task_reward;
        const VlmReward v =
            r_vlm_from_values(f_next, *ctx.reference, ctx.shaping, transition_draw_seed(ctx.run_seed, e.serial));
        return r_mvr(e.task_reward, v.value, w);
    }
    }
    return e.task_reward;
}

namespace {

void check_context(const RewardProvider& p, const RewardContext& ctx) {
    if (p.uses_model() && ctx.model_ready && ctx.model == nullptr)
        throw InvalidArgument("reward variant " + to_string(p.variant()) + " needs a model in its context");
    if (p.uses_reference() && ctx.reference == nullptr)
        throw InvalidArgument("reward variant " + to_string(p.variant()) + " needs a reference set in its context");
}

}  // namespace

double RewardProvider::provide(const BufferEntry& e, const RewardContext& ctx) const {
    check_context(*this, ctx);
    const double f = uses_model() && ctx.model_ready && !ctx.use_stored_shaping ? f_mvr(*ctx.model, e.next_state) : 0.0;
    return combine(e, f, ctx);
}

std::vector<double> RewardProvider::provide_batch(const ReplayBuffer& buffer, std::span<const std::size_t> idx,
                                                  const RewardContext& ctx) const {
    check_context(*this, ctx);
    std::vector<double> out(idx.size());
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(idx.size()));
    if (uses_model() && ctx.model_ready && !ctx.use_stored_shaping && !idx.empty()) {
        Eigen::MatrixXd X(ctx.model->state_dim(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k)
            X.col(static_cast<Eigen::Index>(k)) = buffer.at(idx[k]).next_state;
        f = f_mvr_batch(*ctx.model, X);
    }
    for (std::size_t k = 0; k < idx.size(); ++k)
        out[k] = combine(buffer.at(idx[k]), f[static_cast<Eigen::Index>(k)], ctx);
    return out;
}

double provide_reward(const RewardProvider& provider, const Transition& tr, const RewardContext& ctx,
                      double episode_bonus) {
    BufferEntry e{tr.state, tr.action, tr.task_reward, tr.next_state, tr.done, episode_bonus, tr.task_reward, 0};
    return provider.provide(e, ctx);
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
}

// Output layer drawn from U(-3e-3, 3e-3) so the initial policy sits in the linear part of
// tanh and the initial Q estimates are near zero.
void shrink_output_layer(Mlp& net, Rng& rng) {
    constexpr double kBound = 3e-3;
    for (Eigen::Index i = 0; i < net.weights().back().size(); ++i)
        net.weights().back().data()[i] = rng.uniform(-kBound, kBound);
    for (Eigen::Index i = 0; i < net.biases().back().size(); ++i)
        net.biases().back()[i] = rng.uniform(-kBound, kBound);
}

}  // namespace

DdpgAgent::DdpgAgent(int state_dim, int action_dim, AgentConfig cfg, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), cfg_(std::move(cfg)), rng_(Rng::derived(seed, 0xa9e7)) {
    validate(cfg_);
    Rng init = Rng::derived(seed, 0x1417);
    actor_ = Mlp(layer_sizes(state_dim, cfg_.actor_hidden, action_dim), init);
    critic_ = Mlp(layer_sizes(state_dim + action_dim, cfg_.critic_hidden, 1), init);
    shrink_output_layer(actor_, init);
    shrink_output_layer(critic_, init);
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_opt_ = Adam(actor_, cfg_.actor_lr);
    critic_opt_ = Adam(critic_, cfg_.critic_lr);
    if (cfg_.twin_critic) {
        critic2_ = Mlp(layer_sizes(state_dim + action_dim, cfg_.critic_hidden, 1), init);
        shrink_output_layer(critic2_, init);
        critic2_target_ = critic2_;
        critic2_opt_ = Adam(critic2_, cfg_.critic_lr);
    }
}

Eigen::MatrixXd DdpgAgent::policy(const Mlp& net, const Eigen::MatrixXd& S) const {
    return net.forward(S).array().tanh().matrix();
}

Eigen::VectorXd DdpgAgent::act_greedy(const StateVec& s) const {
    if (!s.allFinite())
        throw InvalidArgument("act on a non-finite state");
    return policy(actor_, s).col(0);
}

Eigen::VectorXd DdpgAgent::act(const StateVec& s, bool explore) {
    Eigen::VectorXd a = act_greedy(s);
    if (explore) {
        const double rho = cfg_.noise_correlation;
        const double innovation = std::sqrt(1.0 - rho * rho);
        if (noise_.size() != a.size())
            reset_noise();
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            noise_[i] = rho == 0.0 ? rng_.normal(0.0, cfg_.exploration_noise_std)
                                   : rho * noise_[i] + innovation * rng_.normal(0.0, cfg_.exploration_noise_std);
            a[i] = std::clamp(a[i] + noise_[i], -1.0, 1.0);
        }
    }
    return a;
}

void DdpgAgent::reset_noise() {
    noise_.resize(action_dim_);
    for (Eigen::Index i = 0; i < noise_.size(); ++i)
        noise_[i] = rng_.normal(0.0, cfg_.exploration_noise_std);
}

Eigen::VectorXd DdpgAgent::random_action() {
    Eigen::VectorXd a(action_dim_);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a[i] = rng_.uniform(-1.0, 1.0);
    return a;
}

void DdpgAgent::critic_batch(const ReplayBuffer& buffer, std::span<const std::size_t> idx,
                             std::span<const double> rewards, Eigen::MatrixXd& X, Eigen::MatrixXd& Y) const {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd S(state_dim_, n), A(action_dim_, n), S2(state_dim_, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const BufferEntry& e = buffer.at(idx[static_cast<std::size_t>(k)]);
        S.col(k) = e.state;
        A.col(k) = e.action;
        S2.col(k) = e.next_state;
    }
    X.resize(state_dim_ + action_dim_, n);
    X << S, A;
    Eigen::MatrixXd X2(state_dim_ + action_dim_, n);
    X2 << S2, policy(actor_target_, S2);
    Eigen::MatrixXd q_next = critic_target_.forward(X2);
    if (cfg_.twin_critic)
        q_next = q_next.cwiseMin(critic2_target_.forward(X2));
    // Episodes end only by the time limit, so every transition bootstraps.
    Y.resize(1, n);
    for (Eigen::Index k = 0; k < n; ++k)
        Y(0, k) = rewards[static_cast<std::size_t>(k)] + cfg_.gamma * q_next(0, k);
}

UpdateStats DdpgAgent::update(const ReplayBuffer& buffer, const RewardProvider& provider, const RewardContext& ctx) {
    if (buffer.size() < cfg_.batch_size)
        throw InvalidArgument("replay buffer holds fewer transitions than one batch");
    const std::vector<std::size_t> idx = buffer.sample_indices(cfg_.batch_size, rng_);
    const std::vector<double> rewards = provider.provide_batch(buffer, idx, ctx);

    UpdateStats st;
    st.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());

    Eigen::MatrixXd X, Y;
    critic_batch(buffer, idx, rewards, X, Y);
    {
        Mlp g = Mlp::zeros_like(critic_);
        st.critic_loss = mse_loss(critic_, X, Y, &g);
        critic_opt_.step(critic_, g);
        if (cfg_.twin_critic) {
            Mlp g2 = Mlp::zeros_like(critic2_);
            mse_loss(critic2_, X, Y, &g2);
            critic2_opt_.step(critic2_, g2);
        }
    }

    // Actor: ascend mean Q(s, tanh(actor(s))).
    const Eigen::MatrixXd S = X.topRows(state_dim_);
    Mlp::Cache actor_cache;
    const Eigen::MatrixXd pre = actor_.forward(S, &actor_cache);
    const Eigen::MatrixXd A = pre.array().tanh().matrix();
    Eigen::MatrixXd XA(state_dim_ + action_dim_, S.cols());
    XA << S, A;
    Mlp::Cache critic_cache;
    const Eigen::MatrixXd q = critic_.forward(XA, &critic_cache);
    st.actor_objective = q.mean();
    const double n = static_cast<double>(S.cols());
    const Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, S.cols(), -1.0 / n);
    const Eigen::MatrixXd dXA = critic_.backward(critic_cache, dq, nullptr);
    const Eigen::MatrixXd dA = dXA.bottomRows(action_dim_);
    // Plus a quadratic penalty on the pre-tanh output, which keeps the policy out of the
    // saturated region where the actor gradient vanishes.
    const Eigen::MatrixXd dPre = dA.cwiseProduct((1.0 - A.array().square()).matrix()) +
                                 (2.0 * cfg_.preactivation_penalty / n) * pre;
    Mlp ga = Mlp::zeros_like(actor_);
    actor_.backward(actor_cache, dPre, &ga);
    actor_opt_.step(actor_, ga);

    critic_target_.soft_update_from(critic_, cfg_.tau);
    actor_target_.soft_update_from(actor_, cfg_.tau);
    if (cfg_.twin_critic)
        critic2_target_.soft_update_from(critic2_, cfg_.tau);
    return st;
}

double mean_phase_rate(const EnvSpec& spec, const StateSequence& seq) {
    if (!spec.is_cycler() || seq.length() < 2)
        return 0.0;
    const std::size_t window = std::min<std::size_t>(static_cast<std::size_t>(spec.cycler.success_window), seq.length() - 1);
    double total = 0.0;
    for (std::size_t t = seq.length() - window; t < seq.length(); ++t)
        total += phase_increment(seq[t - 1][0], seq[t][0]);
    return total / static_cast<double>(window);
}

EpisodeRecord rollout(const DdpgAgent& agent, const EnvSpec& spec, double noise_std, Rng& rng,
                      std::int64_t episode_id) {
    Environment env(spec);
    std::vector<StateVec> states{env.state()};
    EpisodeRecord rec;
    bool done = false;
    while (!done) {
        Eigen::VectorXd a = agent.act_greedy(env.state());
        if (noise_std > 0.0)
            for (Eigen::Index i = 0; i < a.size(); ++i)
                a[i] = std::clamp(a[i] + rng.normal(0.0, noise_std), -1.0, 1.0);
        const Transition tr = env.step(a);
        states.push_back(tr.next_state);
        rec.task_rewards.push_back(tr.task_reward);
        done = tr.done;
    }
    rec.states = StateSequence(std::move(states), episode_id);
    rec.success = env_success(spec, rec.states);
    return rec;
}

EvalResult evaluate(const DdpgAgent& agent, const EnvSpec& spec, std::size_t n_episodes) {
    if (n_episodes == 0)
        throw InvalidArgument("evaluate needs at least one episode");
    EvalResult res;
    Rng unused(0);
    EnvSpec eval_spec = spec;
    std::size_t successes = 0;
    for (std::size_t i = 0; i < n_episodes; ++i) {
        eval_spec.rng_seed = spec.rng_seed + i;
        EpisodeRecord rec = rollout(agent, eval_spec, -1.0, unused, static_cast<std::int64_t>(i));
        const double ret = std::accumulate(rec.task_rewards.begin(), rec.task_rewards.end(), 0.0);
        res.returns.push_back(ret);
        successes += rec.success ? 1 : 0;
        res.mean_phase_rate += mean_phase_rate(spec, rec.states);
        res.episodes.push_back(std::move(rec));
    }
    const double n = static_cast<double>(n_episodes);
    res.mean_return = std::accumulate(res.returns.begin(), res.returns.end(), 0.0) / n;
    double var = 0.0;
    for (double r : res.returns)
        var += (r - res.mean_return) * (r - res.mean_return);
    res.std_return = std::sqrt(var / n);
    res.success_rate = static_cast<double>(successes) / n;
    res.mean_phase_rate /= n;
    return res;
}

}  // namespace mvrlab
