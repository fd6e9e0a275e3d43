#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvrlab/oracle.hpp"

#include <cmath>
#include <numbers>

using namespace mvrlab;
using doctest::Approx;

namespace {

OracleConfig quiet() {
    OracleConfig c;
    c.noise_std = 0.0;
    return c;
}

StateSequence cycling(double rate, int n, double speed = 0.8) {
    std::vector<StateVec> s;
    for (int t = 0; t < n; ++t)
        s.push_back(Eigen::Vector3d(wrap_angle(0.1 + rate * t), speed, rate));
    return StateSequence(s);
}

StateSequence parked(const Eigen::Vector4d& p, int n) { return StateSequence(std::vector<StateVec>(n, p)); }

RenderedClip clip(const EnvSpec& e, const StateSequence& s, int view, std::size_t len = 16) {
    return render(e, s, make_view(view), RenderOptions{len});
}

}  // namespace

TEST_CASE("config validation") {
    OracleConfig c;
    c.noise_std = -1;
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    c = OracleConfig{};
    c.embed_dim = 1;
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    CHECK(OracleConfig{}.view_bias[0] == 0.10);
    CHECK(OracleConfig{}.view_bias[2] == -0.05);
}

TEST_CASE("frozen cycler clip scores only the bias") {
    const EnvSpec e = make_env_spec("cycler");
    const SyntheticOracle o(quiet(), e);
    const StateSequence frozen = cycling(0.0, 30);
    for (int v = 0; v < 4; ++v) {
        const RenderedClip c = clip(e, frozen, v);
        CHECK(o.quality(c, {"running"}) == 0.0);
        CHECK(o.score_text(c, {"running"}) == Approx(std::clamp(o.config().view_bias[v], 0.0, 1.0)));
    }
}

TEST_CASE("running quality is the mean phase rate over 0.25") {
    const EnvSpec e = make_env_spec("cycler");
    const SyntheticOracle o(quiet(), e);
    CHECK(o.quality(clip(e, cycling(0.1, 30), 1), {"running"}) == Approx(0.4));
    CHECK(o.quality(clip(e, cycling(0.3, 30), 1), {"running"}) == 1.0);
    CHECK(o.quality(clip(e, cycling(-0.2, 30), 1), {"running"}) == 0.0);
    // a mirrored rear camera reconstructs the same rate
    CHECK(o.quality(clip(e, cycling(0.1, 30), 3), {"running"}) == Approx(0.4));
    // the frontal camera cannot see theta
    CHECK(o.quality(clip(e, cycling(0.2, 30), 0), {"running"}) == 0.0);
}

TEST_CASE("pitfall property: poses vs motion") {
    const EnvSpec e = make_env_spec("cycler");
    OracleConfig cfg;  // default noise 0.02
    const SyntheticOracle o(cfg, e);
    // the best single pose for the image scorer is theta = pi/2
    std::vector<StateVec> pose(30, Eigen::Vector3d(std::numbers::pi / 2, 0.8, 0.0));
    for (int v = 0; v < 4; ++v)
        CHECK(o.score_text(clip(e, StateSequence(pose), v), {"running"}) <= cfg.view_bias[v] + 3 * cfg.noise_std + 1e-12);
    for (int v : {1, 3})
        CHECK(o.score_text(clip(e, cycling(0.25, 30), v), {"running"}) >= 0.8);
    // while a single frame of the pose is the image scorer's favourite
    const RenderedClip pc = clip(e, StateSequence(pose), 1);
    CHECK(SyntheticOracle(quiet(), e).image_score(pc, 0, {"running"}) == Approx(1.0));
}

TEST_CASE("sitting quality and view occlusion") {
    const EnvSpec e = make_env_spec("seat");
    const SyntheticOracle o(quiet(), e);
    const StateSequence seated = parked(Eigen::Vector4d(0.7, 0.78, 0, 0), 20);
    CHECK(o.score_text(clip(e, seated, 1), {"sitting"}) == 1.0);
    // arriving from the start: view 0 holds p_y at -0.9 and cannot see the seat
    std::vector<StateVec> path{Eigen::Vector4d(0.7, -0.9, 0, 0)};
    for (int t = 0; t < 20; ++t)
        path.push_back(Eigen::Vector4d(0.7, 0.78, 0, 0));
    const StateSequence arrive(path);
    const double s0 = o.score_text(clip(e, arrive, 0), {"sitting"});
    const double s90 = o.score_text(clip(e, arrive, 1), {"sitting"});
    CHECK(s90 == 1.0);
    CHECK(s0 < s90);
    CHECK(s0 == Approx(0.1));
    // fraction of settled in-seat frames among the final 16
    std::vector<StateVec> half;
    for (int t = 0; t < 8; ++t)
        half.push_back(Eigen::Vector4d(0.2, 0.2, 0, 0));
    for (int t = 0; t < 8; ++t)
        half.push_back(Eigen::Vector4d(0.7, 0.78, 0, 0));
    CHECK(o.quality(clip(e, StateSequence(half), 1), {"sitting"}) == Approx(0.5));
    // moving through the seat does not count
    CHECK(o.quality(clip(e, parked(Eigen::Vector4d(0.7, 0.78, 0.05, 0), 16), 1), {"sitting"}) == 0.0);
}

TEST_CASE("view-bias property") {
    const EnvSpec e = make_env_spec("cycler");
    OracleConfig cfg = quiet();
    cfg.view_bias = {0.1, 0.0, -0.05, 0.0};
    const SyntheticOracle o(cfg, e);
    const StateSequence s = cycling(0.05, 30);  // q = 0.2 where visible
    const double q = 0.2;
    CHECK(o.score_text(clip(e, s, 1), {"running"}) == Approx(q));
    CHECK(o.score_text(clip(e, s, 3), {"running"}) == Approx(q));
    CHECK(o.score_text(clip(e, s, 0), {"running"}) == Approx(0.1));
    CHECK(o.score_text(clip(e, s, 2), {"running"}) == Approx(0.0));
}

TEST_CASE("noise is a function of clip content") {
    const EnvSpec e = make_env_spec("cycler");
    const SyntheticOracle o(OracleConfig{}, e);
    const RenderedClip a = clip(e, cycling(0.1, 30), 1);
    const RenderedClip b = clip(e, cycling(0.1, 30), 1);
    CHECK(o.noise(a) == o.noise(b));
    CHECK(o.noise(a) != o.noise(clip(e, cycling(0.11, 30), 1)));
    CHECK(o.score_text(a, {"running"}) == o.score_text(b, {"running"}));
    // noise magnitude is roughly noise_std
    double ss = 0;
    for (int i = 0; i < 400; ++i)
        ss += std::pow(o.noise(clip(e, cycling(0.001 * i, 20), 1)), 2);
    CHECK(std::sqrt(ss / 400) == Approx(0.02).epsilon(0.2));
    OracleConfig other;
    other.rng_seed = 9;
    CHECK(SyntheticOracle(other, e).noise(a) != o.noise(a));
}

TEST_CASE("unknown prompts are rejected") {
    const EnvSpec e = make_env_spec("cycler");
    const SyntheticOracle o(OracleConfig{}, e);
    CHECK_THROWS_AS(o.score_text(clip(e, cycling(0.1, 20), 1), {"sitting"}), InvalidArgument);
    CHECK(o.has_prompt("running"));
    CHECK(default_prompt(make_env_spec("seat")).text == "sitting");
}

TEST_CASE("embedding invariances") {
    const EnvSpec e = make_env_spec("seat");
    const SyntheticOracle o(OracleConfig{}, e);
    Rng rng(8);
    std::vector<StateVec> s;
    for (int t = 0; t < 16; ++t)
        s.push_back(Eigen::Vector4d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)));
    const RenderedClip c = clip(e, StateSequence(s), 1);
    const Eigen::VectorXd x = o.embed(c);
    CHECK(x.size() == 16);
    CHECK(x.norm() == Approx(1.0).epsilon(1e-12));
    CHECK(o.score_pair(c, c) == Approx(1.0));

    // features (per-channel mean, mean |first difference|) are positively homogeneous
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    for (int t = 0; t < 16; ++t)
        mean += c.frames[t] / 16.0;
    // scaling every frame by 2 doubles both feature blocks and leaves the embedding unchanged
    RenderedClip c2 = c;
    for (auto& f : c2.frames)
        f *= 2.0;
    CHECK((o.embed(c2) - x).norm() < 1e-12);
    // and the embedding of a constant clip depends only on the mean block
    RenderedClip flat = c;
    for (auto& f : flat.frames)
        f = mean;
    RenderedClip flat2 = flat;
    for (auto& f : flat2.frames)
        f = 3.0 * mean;
    CHECK((o.embed(flat) - o.embed(flat2)).norm() < 1e-12);
}

TEST_CASE("pair scores are symmetric and bounded") {
    const EnvSpec e = make_env_spec("cycler");
    const SyntheticOracle o(OracleConfig{}, e);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const RenderedClip a = clip(e, cycling(rng.uniform(-0.3, 0.3), 20, rng.uniform()), static_cast<int>(rng.index(4)));
        const RenderedClip b = clip(e, cycling(rng.uniform(-0.3, 0.3), 20, rng.uniform()), static_cast<int>(rng.index(4)));
        CHECK(o.score_pair(a, b) == o.score_pair(b, a));
        CHECK(std::abs(o.score_pair(a, b)) <= 1.0);
    }
}

TEST_CASE("image scores") {
    const EnvSpec c = make_env_spec("cycler");
    const SyntheticOracle oc(quiet(), c);
    std::vector<StateVec> s{Eigen::Vector3d(-std::numbers::pi / 2, 0.5, 0)};
    CHECK(oc.image_score(clip(c, StateSequence(s), 1, 1), 0, {"running"}) == Approx(0.0));
    const EnvSpec e = make_env_spec("seat");
    const SyntheticOracle os(quiet(), e);
    const RenderedClip at_chair = clip(e, parked(Eigen::Vector4d(0.7, 0.7, 0, 0), 4), 1, 4);
    CHECK(os.image_score(at_chair, 0, {"sitting"}) == Approx(1.0));
    // the chair centre outranks the middle of the seat for the single-frame scorer
    const RenderedClip on_seat = clip(e, parked(Eigen::Vector4d(0.7, 0.78, 0, 0), 4), 1, 4);
    CHECK(os.image_score(on_seat, 0, {"sitting"}) < os.image_score(at_chair, 0, {"sitting"}));
    CHECK_THROWS_AS(os.image_score(on_seat, 4, {"sitting"}), InvalidArgument);
}
