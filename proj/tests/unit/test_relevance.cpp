#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvrlab/relevance.hpp"

#include <cmath>
#include <set>

using namespace mvrlab;
using doctest::Approx;

namespace {

// Plain-loop forward pass, independent of the Eigen implementation.
std::vector<double> embed_ref(const RelevanceModel& m, const StateVec& s) {
    const int H = m.hidden(), D = m.state_dim();
    std::vector<double> h1(H), h2(H);
    for (int i = 0; i < H; ++i) {
        double a = m.b1[i];
        for (int j = 0; j < D; ++j)
            a += m.W1(i, j) * s[j];
        h1[i] = a > 0 ? a : 0;
    }
    double n = 0;
    for (int i = 0; i < H; ++i) {
        double a = m.b2[i];
        for (int j = 0; j < H; ++j)
            a += m.W2(i, j) * h1[j];
        h2[i] = a;
        n += a * a;
    }
    n = std::sqrt(n);
    for (double& x : h2)
        x = n > 0 ? x / n : 0;
    return h2;
}

double f_ref(const RelevanceModel& m, const StateVec& s) {
    const auto e = embed_ref(m, s);
    double pn = 0, dot = 0;
    for (int i = 0; i < m.hidden(); ++i) {
        pn += m.p[i] * m.p[i];
        dot += e[i] * m.p[i];
    }
    return dot / std::sqrt(pn);
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

StateSequence random_seq(Rng& rng, int dim, int len, std::int64_t id = 0) {
    std::vector<StateVec> s;
    for (int t = 0; t < len; ++t)
        s.push_back(StateVec::NullaryExpr(dim, [&](Eigen::Index) { return rng.uniform(-1, 1); }));
    return StateSequence(s, id);
}

SimilaritySample random_sample(Rng& rng, int dim, int len, double score, std::int64_t id = 0) {
    SimilaritySample x;
    x.sequence = random_seq(rng, dim, len, id);
    x.clip_embedding = Eigen::VectorXd::NullaryExpr(8, [&](Eigen::Index) { return rng.normal(); }).normalized();
    x.text_score = score;
    return x;
}

// Model with a 2-d hidden layer and hand-set weights.
RelevanceModel tiny() {
    RelevanceModel m;
    m.W1 = (Eigen::Matrix2d() << 1.0, -0.5, 0.25, 2.0).finished();
    m.b1 = Eigen::Vector2d(0.1, -0.2);
    m.W2 = (Eigen::Matrix2d() << 0.5, 1.0, -1.0, 0.3).finished();
    m.b2 = Eigen::Vector2d(0.0, 0.4);
    m.p = Eigen::Vector2d(3.0, 4.0);
    return m;
}

}  // namespace

TEST_CASE("hand-set forward pass") {
    const RelevanceModel m = tiny();
    // s = (1, 0): h1 = relu(1.1, 0.05) = (1.1, 0.05); h2 = (0.55+0.05, -1.1+0.015+0.4) = (0.6, -0.685)
    const double n = std::hypot(0.6, -0.685);
    const double expect = (0.6 / n) * 0.6 + (-0.685 / n) * 0.8;
    CHECK(f_mvr(m, Eigen::Vector2d(1, 0)) == Approx(expect).epsilon(1e-14));
    CHECK(f_mvr(m, Eigen::Vector2d(1, 0)) == Approx(f_ref(m, Eigen::Vector2d(1, 0))).epsilon(1e-14));
}

TEST_CASE("aligned and orthogonal predictors") {
    RelevanceModel m = tiny();
    const StateVec s = Eigen::Vector2d(1, 0);
    const Eigen::VectorXd e = state_embedding(m, s);
    m.p = 2.5 * e;
    CHECK(f_mvr(m, s) == Approx(1.0));
    m.p = Eigen::Vector2d(-e[1], e[0]);
    CHECK(f_mvr(m, s) == Approx(0.0).epsilon(1e-15));
}

TEST_CASE("zero h2 gives zero relevance") {
    RelevanceModel m = tiny();
    m.W2.setZero();
    m.b2.setZero();
    CHECK(f_mvr(m, Eigen::Vector2d(0.3, 0.2)) == 0.0);
    CHECK(state_embedding(m, Eigen::Vector2d(0.3, 0.2)).norm() == 0.0);
}

TEST_CASE("forward matches the loop oracle on random models") {
    Rng rng(3);
    for (int k = 0; k < 20; ++k) {
        const RelevanceModel m = RelevanceModel::init(5, 16, k);
        for (int i = 0; i < 20; ++i) {
            const StateVec s = StateVec::NullaryExpr(5, [&](Eigen::Index) { return rng.normal(0, 3); });
            const double f = f_mvr(m, s);
            CHECK(f == Approx(f_ref(m, s)).epsilon(1e-12));
            CHECK(std::abs(f) <= 1.0 + 1e-9);
        }
    }
    const RelevanceModel m = RelevanceModel::init(5, 16, 1);
    Eigen::MatrixXd S = Eigen::MatrixXd::NullaryExpr(5, 7, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
    const Eigen::VectorXd fb = f_mvr_batch(m, S);
    for (int i = 0; i < 7; ++i)
        CHECK(fb[i] == Approx(f_mvr(m, S.col(i))).epsilon(1e-14));
    CHECK_THROWS_AS(f_mvr(m, StateVec::Zero(4)), InvalidArgument);
}

TEST_CASE("sequence mean embedding") {
    const RelevanceModel m = RelevanceModel::init(3, 8, 0);
    Rng rng(1);
    const StateSequence one = random_seq(rng, 3, 1);
    CHECK(encode_seq_mean(m, one).norm() == Approx(1.0));
    const StateSequence five = random_seq(rng, 3, 5);
    std::vector<double> acc(8, 0.0);
    for (const auto& s : five.states()) {
        const auto e = embed_ref(m, s);
        for (int i = 0; i < 8; ++i)
            acc[i] += e[i] / 5.0;
    }
    const Eigen::VectorXd g = encode_seq_mean(m, five);
    for (int i = 0; i < 8; ++i)
        CHECK(g[i] == Approx(acc[i]).epsilon(1e-13));
    CHECK(g.norm() <= 1.0 + 1e-12);

    // identity layers with biases that cancel, so relu never bites on [-1, 1]
    RelevanceModel lin;
    lin.W1 = Eigen::Matrix2d::Identity();
    lin.b1 = Eigen::Vector2d(1.0, 1.0);
    lin.W2 = Eigen::Matrix2d::Identity();
    lin.b2 = Eigen::Vector2d(-1.0, -1.0);
    lin.p = Eigen::Vector2d(1, 0);
    // h2 = s, so the embeddings of (0.5, 0) and (-0.5, 0) are opposite
    const StateSequence opposite({Eigen::Vector2d(0.5, 0), Eigen::Vector2d(-0.5, 0)});
    CHECK(encode_seq_mean(lin, opposite).norm() < 1e-15);
}

TEST_CASE("Bradley-Terry targets") {
    CHECK(h_vid(0.4, 0.4) == 0.5);
    CHECK(h_vid(1, 0) == Approx(0.73106).epsilon(1e-5));
    CHECK(h_vid(1, 0, 10.0) == Approx(sig(10.0)));
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const double a = rng.uniform(), b = rng.uniform(), beta = rng.uniform(0.1, 20);
        CHECK(std::abs(h_vid(a, b, beta) + h_vid(b, a, beta) - 1.0) <= 1e-12);
    }
}

TEST_CASE("h_state") {
    RelevanceModel m = RelevanceModel::init(2, 8, 4);
    Rng rng(7);
    const StateSequence a = random_seq(rng, 2, 4), b = random_seq(rng, 2, 6);
    CHECK(h_state(m, a, a) == 0.5);
    CHECK(h_state(m, a, b) + h_state(m, b, a) == Approx(1.0).epsilon(1e-12));
    double fa = 0, fb = 0;
    for (const auto& s : a.states())
        fa += f_ref(m, s) / 4;
    for (const auto& s : b.states())
        fb += f_ref(m, s) / 6;
    CHECK(h_state(m, a, b) == Approx(sig(fa - fb)).epsilon(1e-12));
    // means at the extremes: f = 1 everywhere vs f = -1 everywhere
    RelevanceModel lin;
    lin.W1 = Eigen::Matrix2d::Identity();
    lin.b1 = Eigen::Vector2d(1.0, 1.0);
    lin.W2 = Eigen::Matrix2d::Identity();
    lin.b2 = Eigen::Vector2d(-1.0, -1.0);
    lin.p = Eigen::Vector2d(1, 0);
    const StateSequence up(std::vector<StateVec>(3, Eigen::Vector2d(0.5, 0)));
    const StateSequence down(std::vector<StateVec>(3, Eigen::Vector2d(-0.5, 0)));
    CHECK(h_state(lin, up, down) == Approx(0.88080).epsilon(1e-5));
}

TEST_CASE("cross-entropy values and calibration") {
    CHECK(binary_cross_entropy(0.5, 0.5) == Approx(0.69315).epsilon(1e-5));
    const double p = sig(1.0);
    CHECK(binary_cross_entropy(p, p) == Approx(0.58220).epsilon(1e-5));
    Rng rng(9);
    for (int k = 0; k < 50; ++k) {
        const double target = k == 0 ? 0.5 : rng.uniform(0.01, 0.99);
        int best = 0;
        double best_loss = 1e300;
        for (int i = 1; i <= 999; ++i) {
            const double l = binary_cross_entropy(target, i / 1000.0);
            if (l < best_loss) {
                best_loss = l;
                best = i;
            }
        }
        CHECK(std::abs(best / 1000.0 - target) <= 0.0005 + 1e-12);
    }
}

TEST_CASE("loss_reg and loss_total by hand") {
    RelevanceModel lin;
    lin.W1 = Eigen::Matrix2d::Identity();
    lin.b1 = Eigen::Vector2d(1.0, 1.0);
    lin.W2 = Eigen::Matrix2d::Identity();
    lin.b2 = Eigen::Vector2d(-1.0, -1.0);
    lin.p = Eigen::Vector2d(1, 0);
    // e(a) = (1, 0), e(b) = (0.6, 0.8): inner product 0.6
    SimilaritySample a, b;
    a.sequence = StateSequence({Eigen::Vector2d(0.5, 0)});
    b.sequence = StateSequence({Eigen::Vector2d(0.3, 0.4)});
    a.clip_embedding = Eigen::Vector2d(1, 0);
    b.clip_embedding = Eigen::Vector2d(0.6, 0.8);
    a.text_score = b.text_score = 0.5;
    // identical clip and state geometry: zero regulariser
    CHECK(loss_reg(lin, ComparisonPair(a, b)) == Approx(0.0).epsilon(1e-15));
    // psi = 0.3 vs inner product 0.5
    b.sequence = StateSequence({Eigen::Vector2d(0.5 * 0.5, 0.5 * std::sqrt(0.75))});
    b.clip_embedding = Eigen::Vector2d(0.3, std::sqrt(1 - 0.09));
    CHECK(loss_reg(lin, ComparisonPair(a, b)) == Approx(0.2));

    // total = matching + reg for a singleton; f(a) = 1, f(b) = 0.5, equal scores
    const ComparisonPair pr(a, b);
    const double match = -0.5 * std::log(sig(0.5)) - 0.5 * std::log(sig(-0.5));
    CHECK(loss_matching(lin, pr) == Approx(match));
    const std::vector<ComparisonPair> one{pr};
    CHECK(loss_total(lin, one) == Approx(match + 0.2));
    CHECK(loss_total(lin, one, {1.0, 0.0}) == Approx(match));
}

TEST_CASE("loss_total is the batch mean") {
    Rng rng(5);
    const RelevanceModel m = RelevanceModel::init(3, 12, 2);
    std::vector<SimilaritySample> s;
    for (int i = 0; i < 9; ++i)
        s.push_back(random_sample(rng, 3, 4, rng.uniform(), i));
    std::vector<ComparisonPair> pairs;
    for (int i = 0; i < 8; ++i)
        pairs.emplace_back(s[i], s[i + 1]);
    double sum = 0;
    for (const auto& p : pairs) {
        // independent recomputation of both terms
        double fi = 0, fj = 0;
        for (const auto& x : p.first().sequence.states())
            fi += f_ref(m, x) / 4;
        for (const auto& x : p.second().sequence.states())
            fj += f_ref(m, x) / 4;
        const double t = sig(2.0 * (p.first().text_score - p.second().text_score));
        const double q = sig(fi - fj);
        Eigen::VectorXd gi = Eigen::VectorXd::Zero(12), gj = Eigen::VectorXd::Zero(12);
        for (const auto& x : p.first().sequence.states()) {
            const auto e = embed_ref(m, x);
            gi += Eigen::Map<const Eigen::VectorXd>(e.data(), 12) / 4;
        }
        for (const auto& x : p.second().sequence.states()) {
            const auto e = embed_ref(m, x);
            gj += Eigen::Map<const Eigen::VectorXd>(e.data(), 12) / 4;
        }
        const double psi = p.first().clip_embedding.dot(p.second().clip_embedding);
        sum += -t * std::log(q) - (1 - t) * std::log(1 - q) + 0.5 * std::abs(psi - gi.dot(gj));
    }
    CHECK(loss_total(m, pairs, {2.0, 0.5}) == Approx(sum / 8).epsilon(1e-12));
    CHECK_THROWS_AS(loss_total(m, std::span<const ComparisonPair>{}), InvalidArgument);
}

TEST_CASE("analytic gradients agree with central differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        std::vector<SimilaritySample> s;
        for (int i = 0; i < 6; ++i)
            s.push_back(random_sample(rng, 4, 5, rng.uniform(), i));
        std::vector<ComparisonPair> pairs;
        for (int i = 0; i < 5; ++i)
            pairs.emplace_back(s[i], s[i + 1]);
        const RelevanceModel m = RelevanceModel::init(4, 16, seed);
        const GradCheckResult a = grad_check(m, pairs, 1e-5, {1.0, 0.0});
        const GradCheckResult b = grad_check(m, pairs, 1e-5, {3.0, 1.0});
        CHECK(a.max_rel_error <= 1e-4);
        CHECK(b.max_rel_error <= 1e-4);
        CHECK(a.checked > m.num_params() / 2);
    }
}

TEST_CASE("grad check is deterministic and flat regions give zero") {
    Rng rng(1);
    std::vector<SimilaritySample> s{random_sample(rng, 2, 3, 0.5, 0), random_sample(rng, 2, 3, 0.5, 1)};
    const std::vector<ComparisonPair> pairs{ComparisonPair(s[0], s[1])};
    const RelevanceModel m = RelevanceModel::init(2, 8, 3);
    CHECK(grad_check(m, pairs, 1e-5).max_rel_error == grad_check(m, pairs, 1e-5).max_rel_error);
    // a pair of identical sequences and equal scores with psi equal to the inner product:
    // the matching loss sits at its minimum (log 2) and the gradient vanishes
    SimilaritySample a = s[0];
    SimilaritySample b = s[0];
    b.clip_embedding = a.clip_embedding;
    const std::vector<ComparisonPair> same{ComparisonPair(a, b)};
    RelevanceModel grad = RelevanceModel::zeros_like(m);
    loss_total_grad(m, same, {1.0, 0.0}, &grad);
    for (double x : grad.flat())
        CHECK(x == Approx(0.0).epsilon(1e-15));
    CHECK(grad_check(m, same, 1e-5, {1.0, 0.0}).max_rel_error <= 1e-4);
}

TEST_CASE("init bounds") {
    const RelevanceModel m = RelevanceModel::init(3, 32, 0);
    CHECK(m.W1.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
    CHECK(m.W2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
    const double kaiming = std::sqrt(6.0 / 32.0);
    CHECK(m.p.cwiseAbs().maxCoeff() <= kaiming);
    CHECK(m.p.cwiseAbs().maxCoeff() > 0.5 * kaiming);
    CHECK(m.num_params() == 3 * 32 + 32 + 32 * 32 + 32 + 32);
    RelevanceModel z = RelevanceModel::zeros_like(m);
    z.set_flat(m.flat());
    CHECK(z.flat() == m.flat());
}

TEST_CASE("training learns rank-consistent scores") {
    // score is a monotone function of the mean of the first state coordinate
    Rng rng(4);
    RewardDataset d(500);
    for (int i = 0; i < 200; ++i) {
        SimilaritySample x = random_sample(rng, 2, 4, 0.0, i);
        double mean = 0;
        for (const auto& s : x.sequence.states())
            mean += s[0] / 4;
        x.text_score = (mean + 1) / 2;
        d.append(x);
    }
    TrainConfig cfg;
    cfg.learning_rate = LearningRateSchedule::fixed(0.05);
    cfg.beta = 10;
    cfg.reg_weight = 0;
    Rng tr(1);
    TrainReport rep;
    const RelevanceModel m = train_relevance(RelevanceModel::init(2, 16, 0), d, cfg, tr, &rep);
    CHECK(rep.finite);
    CHECK(rep.best_holdout_loss < rep.initial_holdout_loss);
    CHECK(f_mvr(m, Eigen::Vector2d(0.9, 0)) > f_mvr(m, Eigen::Vector2d(-0.9, 0)));

    // zero learning rate leaves the parameters alone
    TrainConfig frozen = cfg;
    frozen.learning_rate = LearningRateSchedule::fixed(0.0);
    const RelevanceModel start = RelevanceModel::init(2, 16, 0);
    Rng tr2(1);
    CHECK(train_relevance(start, d, frozen, tr2).flat() == start.flat());

    RewardDataset tiny_d(4);
    tiny_d.append(d[0]);
    Rng tr3(1);
    CHECK_THROWS_AS(train_relevance(start, tiny_d, cfg, tr3), InvalidArgument);
}

TEST_CASE("training is reproducible") {
    Rng rng(8);
    RewardDataset d(100);
    for (int i = 0; i < 40; ++i)
        d.append(random_sample(rng, 3, 4, rng.uniform(), i));
    TrainConfig cfg;
    cfg.max_epochs = 5;
    Rng a(3), b(3);
    CHECK(train_relevance(RelevanceModel::init(3, 8, 0), d, cfg, a).flat() ==
          train_relevance(RelevanceModel::init(3, 8, 0), d, cfg, b).flat());
}

TEST_CASE("learning-rate schedule and config validation") {
    const auto lin = LearningRateSchedule::linear(6e-4, 5e-5);
    CHECK(lin.at(0.0) == Approx(6e-4));
    CHECK(lin.at(1.0) == Approx(5e-5));
    CHECK(lin.at(0.5) == Approx(3.25e-4));
    TrainConfig cfg;
    cfg.learning_rate = LearningRateSchedule::fixed(-1);
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = TrainConfig{};
    cfg.holdout_fraction = 1.0;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
}

TEST_CASE("pair sampling") {
    Rng rng(1);
    const std::vector<std::size_t> pool{0, 1, 2, 3, 4};
    const auto pairs = sample_pairs(pool, 20, rng);
    CHECK(pairs.size() == 20);
    std::set<std::pair<std::size_t, std::size_t>> seen(pairs.begin(), pairs.end());
    CHECK(seen.size() == 20);
    for (const auto& [i, j] : pairs)
        CHECK(i != j);
}

TEST_CASE("numerically safe log-sigmoid") {
    CHECK(log_sigmoid(2.0) == Approx(-0.12693).epsilon(1e-5));
    CHECK(std::isfinite(log_sigmoid(-800)));
    CHECK(log_sigmoid(-800) == Approx(-800));
    CHECK(log_sigmoid(800) == 0.0);
}
