#include "mvrlab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mvrlab {

namespace {

constexpr double kPi = std::numbers::pi;

void check_action(const EnvSpec& spec, const Eigen::VectorXd& action) {
    if (action.size() != spec.action_dim)
        throw InvalidArgument("action has wrong dimension");
    if (!action.allFinite())
        throw InvalidArgument("action contains non-finite values");
}

ViewModel make_cycler_views() {
    ViewModel vm;
    for (int v = 0; v < ViewId::kMaxViews; ++v) {
        // Cameras behind the agent see the rotation mirrored.
        const double sign = v >= 2 ? -1.0 : 1.0;
        vm.projection[v] = Eigen::Vector3d(sign, 1.0, sign);
        const bool frontal = v == 0 || v == 2;
        vm.mask[v] = {!frontal, true, !frontal};
    }
    return vm;
}

ViewModel make_seat_views() {
    ViewModel vm;
    for (int v = 0; v < ViewId::kMaxViews; ++v) {
        const double sign = v >= 2 ? -1.0 : 1.0;
        vm.projection[v] = Eigen::Vector4d(sign, 1.0, sign, 1.0);
        const bool frontal = v == 0 || v == 2;
        vm.mask[v] = {true, !frontal, true, true};
    }
    return vm;
}

}  // namespace

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0)
        a += 2.0 * kPi;
    return a - kPi;
}

double phase_increment(double from, double to) { return wrap_angle(to - from); }

bool in_seat_region(const SeatParams& p, double x, double y) {
    return std::abs(x - p.seat_center.x()) <= p.seat_half_width &&
           std::abs(y - p.seat_center.y()) <= p.seat_half_width;
}

bool in_leg_zone(const SeatParams& p, double x, double y) {
    return (Eigen::Vector2d(x, y) - p.leg_center).norm() <= p.leg_radius;
}

EnvSpec make_env_spec(const std::string& name) {
    EnvSpec spec;
    spec.name = name;
    if (name == "cycler") {
        spec.state_dim = 3;
        spec.action_dim = 2;
    } else if (name == "seat") {
        spec.state_dim = 4;
        spec.action_dim = 2;
    } else {
        throw InvalidArgument("unknown environment '" + name + "'");
    }
    return spec;
}

void validate(const EnvSpec& spec) {
    const EnvSpec ref = make_env_spec(spec.name);
    if (spec.state_dim != ref.state_dim || spec.action_dim != ref.action_dim)
        throw InvalidArgument("environment dimensions do not match '" + spec.name + "'");
    if (spec.horizon < 1)
        throw InvalidArgument("horizon must be positive");
    if (spec.reset_noise < 0.0)
        throw InvalidArgument("reset_noise must be non-negative");
}

StateVec env_reset(const EnvSpec& spec) {
    validate(spec);
    Rng rng = Rng::derived(spec.rng_seed, 0x5e5e7);
    StateVec s;
    if (spec.is_cycler()) {
        s = Eigen::Vector3d::Zero();
        if (spec.reset_noise > 0.0)
            s[0] = rng.uniform(-spec.reset_noise, spec.reset_noise);
    } else {
        s = Eigen::Vector4d(spec.seat.start.x(), spec.seat.start.y(), 0.0, 0.0);
        if (spec.reset_noise > 0.0) {
            s[0] += rng.uniform(-spec.reset_noise, spec.reset_noise);
            s[1] += rng.uniform(-spec.reset_noise, spec.reset_noise);
        }
    }
    return s;
}

bool step_success(const EnvSpec& spec, const StateVec& prev, const StateVec& next) {
    if (spec.is_cycler()) {
        const auto& c = spec.cycler;
        return std::abs(next[1] - c.target_speed) < c.success_speed_tol &&
               phase_increment(prev[0], next[0]) >= c.success_phase_rate;
    }
    const auto& p = spec.seat;
    return in_seat_region(p, next[0], next[1]) && next.tail<2>().norm() < p.settle_speed;
}

Transition env_step(const EnvSpec& spec, const StateVec& state, const Eigen::VectorXd& action) {
    check_action(spec, action);
    if (state.size() != spec.state_dim || !state.allFinite())
        throw InvalidArgument("state does not match environment");
    const Eigen::VectorXd a = action.cwiseMax(-1.0).cwiseMin(1.0);

    Transition tr;
    tr.state = state;
    tr.action = a;
    if (spec.is_cycler()) {
        const auto& c = spec.cycler;
        const double inc = c.phase_gain * a[0];
        const double v = std::clamp(state[1] + c.speed_gain * a[1] - c.drag * state[1], 0.0, 1.0);
        tr.next_state = Eigen::Vector3d(wrap_angle(state[0] + inc), v, inc);
        tr.task_reward = 1.0 - std::abs(v - c.target_speed);
    } else {
        const auto& p = spec.seat;
        Eigen::Vector2d q = state.tail<2>() + p.accel * a;
        q = q.cwiseMax(-p.max_speed).cwiseMin(p.max_speed);
        Eigen::Vector2d pos = (state.head<2>() + q).cwiseMax(-1.0).cwiseMin(1.0);
        tr.next_state = Eigen::Vector4d(pos.x(), pos.y(), q.x(), q.y());
        tr.task_reward = 1.0 - (pos - p.chair_center).norm();
    }
    if (spec.sparse_task_reward)
        tr.task_reward = step_success(spec, state, tr.next_state) ? 1.0 : 0.0;
    return tr;
}

bool env_success(const EnvSpec& spec, const StateSequence& seq) {
    if (spec.is_cycler()) {
        const auto& c = spec.cycler;
        const auto window = static_cast<std::size_t>(c.success_window);
        if (seq.length() < window + 1)
            throw InvalidArgument("sequence shorter than the cycler evaluation window");
        double phase = 0.0;
        double speed_err = 0.0;
        const std::size_t first = seq.length() - window;
        for (std::size_t t = first; t < seq.length(); ++t) {
            phase += phase_increment(seq[t - 1][0], seq[t][0]);
            speed_err += std::abs(seq[t][1] - c.target_speed);
        }
        phase /= static_cast<double>(window);
        speed_err /= static_cast<double>(window);
        return speed_err < c.success_speed_tol && phase >= c.success_phase_rate;
    }
    const auto& p = spec.seat;
    const auto window = static_cast<std::size_t>(p.success_window);
    if (seq.length() < window)
        throw InvalidArgument("sequence shorter than the seat evaluation window");
    for (std::size_t t = seq.length() - window; t < seq.length(); ++t) {
        const auto& s = seq[t];
        if (!in_seat_region(p, s[0], s[1]) || s.tail<2>().norm() >= p.settle_speed)
            return false;
    }
    return true;
}

Environment::Environment(EnvSpec spec)
    : spec_(std::move(spec)), reset_rng_(Rng::derived(spec_.rng_seed, 0xe9)) {
    validate(spec_);
    reset();
}

const StateVec& Environment::reset() {
    EnvSpec episode_spec = spec_;
    if (spec_.reset_noise > 0.0)
        episode_spec.rng_seed = reset_rng_.next();
    state_ = env_reset(episode_spec);
    t_ = 0;
    return state_;
}

Transition Environment::step(const Eigen::VectorXd& action) {
    Transition tr = env_step(spec_, state_, action);
    ++t_;
    tr.done = t_ >= spec_.horizon;
    state_ = tr.next_state;
    return tr;
}

const ViewModel& view_model(const EnvSpec& spec) {
    static const ViewModel cycler = make_cycler_views();
    static const ViewModel seat = make_seat_views();
    if (spec.is_cycler())
        return cycler;
    if (spec.is_seat())
        return seat;
    throw InvalidArgument("unknown environment '" + spec.name + "'");
}

RenderedClip render(const EnvSpec& spec, const StateSequence& seq, ViewId view,
                    const RenderOptions& opts) {
    if (view.index < 0 || view.index >= ViewId::kMaxViews)
        throw InvalidArgument("invalid view");
    if (seq.state_dim() != spec.state_dim)
        throw InvalidArgument("sequence does not match environment");
    if (opts.clip_length == 0)
        throw InvalidArgument("clip length must be positive");
    const ViewModel& vm = view_model(spec);
    const Eigen::VectorXd& proj = vm.projection[view.index];
    const OcclusionMask& mask = vm.mask[view.index];

    std::vector<Eigen::VectorXd> frames;
    frames.reserve(seq.length());
    Eigen::VectorXd held = proj.cwiseProduct(seq[0]);
    for (std::size_t t = 0; t < seq.length(); ++t) {
        Eigen::VectorXd f = proj.cwiseProduct(seq[t]);
        for (int i = 0; i < f.size(); ++i) {
            if (mask[i])
                held[i] = f[i];
            else
                f[i] = held[i];
        }
        frames.push_back(std::move(f));
    }

    const std::size_t n = frames.size();
    const std::size_t T = opts.clip_length;
    std::size_t begin = 0;
    if (n > T) {
        if (opts.window == WindowMode::Final) {
            begin = n - T;
        } else {
            if (opts.rng == nullptr)
                throw InvalidArgument("random window needs an rng");
            begin = opts.rng->index(n - T + 1);
        }
    }
    const std::size_t end = std::min(n, begin + T);

    RenderedClip clip;
    clip.view = view;
    clip.source = seq.slice(begin, end);
    clip.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(begin),
                       frames.begin() + static_cast<std::ptrdiff_t>(end));
    while (clip.frames.size() < T)
        clip.frames.push_back(clip.frames.back());
    return clip;
}

Eigen::VectorXd unproject(const EnvSpec& spec, ViewId view, const Eigen::VectorXd& frame) {
    // Projections are diagonal with entries of magnitude one.
    return view_model(spec).projection[view.index].cwiseProduct(frame);
}

}  // namespace mvrlab
