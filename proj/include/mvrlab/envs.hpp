#pragma once

#include "mvrlab/core.hpp"
#include "mvrlab/random.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mvrlab {

/// Rhythmic task. State is (phase, speed, phase rate). The phase rate channel is the last
/// wrapped phase increment; it is what lets a state-only reward tell cycling from holding
/// a single pose.
struct CyclerParams {
    double phase_gain = 0.3;
    double speed_gain = 0.1;
    double drag = 0.05;
    double target_speed = 0.8;
    double success_speed_tol = 0.1;
    double success_phase_rate = 0.15;
    int success_window = 100;
};

/// Point mass that should come to rest on a chair. State is (p_x, p_y, q_x, q_y).
struct SeatParams {
    double accel = 0.05;
    double max_speed = 0.1;
    Eigen::Vector2d chair_center{0.7, 0.7};
    Eigen::Vector2d seat_center{0.7, 0.78};
    double seat_half_width = 0.08;
    Eigen::Vector2d leg_center{0.78, 0.62};
    double leg_radius = 0.08;
    double settle_speed = 0.02;
    int success_window = 20;
    Eigen::Vector2d start{-0.9, -0.9};
};

struct EnvSpec {
    std::string name = "seat";
    int state_dim = 4;
    int action_dim = 2;
    int horizon = 200;
    bool sparse_task_reward = false;
    std::uint64_t rng_seed = 0;
    /// Half-width of a uniform perturbation applied to the canonical start. Zero keeps
    /// resets canonical for every seed.
    double reset_noise = 0.0;
    CyclerParams cycler;
    SeatParams seat;

    bool is_cycler() const { return name == "cycler"; }
    bool is_seat() const { return name == "seat"; }
};

/// Builds a spec with the dimensions of a named environment; throws on unknown names.
EnvSpec make_env_spec(const std::string& name);
void validate(const EnvSpec& spec);

struct Transition {
    StateVec state;
    Eigen::VectorXd action;
    StateVec next_state;
    double task_reward = 0.0;
    bool done = false;
};

StateVec env_reset(const EnvSpec& spec);
/// Pure dynamics; `done` is left false (the horizon is tracked by Environment).
Transition env_step(const EnvSpec& spec, const StateVec& state, const Eigen::VectorXd& action);
bool env_success(const EnvSpec& spec, const StateSequence& seq);

/// Per-step version of the success condition, used by the sparse reward mode.
bool step_success(const EnvSpec& spec, const StateVec& prev, const StateVec& next);

bool in_seat_region(const SeatParams& p, double x, double y);
bool in_leg_zone(const SeatParams& p, double x, double y);
/// Phase increment between consecutive cycler states, wrapped to (-pi, pi].
double phase_increment(double from, double to);
double wrap_angle(double a);

/// Stateful wrapper that tracks the step index and ends episodes at the horizon.
class Environment {
  public:
    explicit Environment(EnvSpec spec);

    const StateVec& reset();
    Transition step(const Eigen::VectorXd& action);

    const EnvSpec& spec() const { return spec_; }
    const StateVec& state() const { return state_; }
    int step_index() const { return t_; }

  private:
    EnvSpec spec_;
    Rng reset_rng_;
    StateVec state_;
    int t_ = 0;
};

/// Per-view feature visibility; true means visible.
using OcclusionMask = std::vector<bool>;

/// How each camera sees the state: a diagonal projection and an occlusion mask per view.
struct ViewModel {
    std::array<Eigen::VectorXd, ViewId::kMaxViews> projection;
    std::array<OcclusionMask, ViewId::kMaxViews> mask;
};

const ViewModel& view_model(const EnvSpec& spec);

enum class WindowMode { Final, Random };

struct RenderOptions {
    std::size_t clip_length = 16;
    WindowMode window = WindowMode::Final;
    /// Needed only for WindowMode::Random.
    Rng* rng = nullptr;
};

/// Renders a clip of `clip_length` frames. Occlusion is applied over the whole sequence
/// (the first state is treated as fully visible), then the window is cut. Short sequences
/// are padded by repeating the last frame.
RenderedClip render(const EnvSpec& spec, const StateSequence& seq, ViewId view,
                    const RenderOptions& opts = {});

/// Undoes the view projection. Occluded channels stay at their held values.
Eigen::VectorXd unproject(const EnvSpec& spec, ViewId view, const Eigen::VectorXd& frame);

}  // namespace mvrlab
