#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvrlab/orchestrator.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace mvrlab;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(const std::string& env = "seat") {
    RunConfig c = default_run_config(env);
    c.schedule.total_steps = 3000;
    c.schedule.update_every = 1000;
    c.schedule.render_every = 1;
    c.agent.warmup_steps = 500;
    c.agent.actor_hidden = c.agent.critic_hidden = {16};
    c.relevance_hidden = 16;
    c.relevance.max_epochs = 5;
    c.eval_episodes = 2;
    c.decay_window = 200;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mvrlab_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string serialise(const Checkpoint& ck) {
    std::ostringstream o;
    write_checkpoint(o, ck);
    return o.str();
}

}  // namespace

TEST_CASE("metrics formatting") {
    MetricsRow r;
    r.step = 10;
    r.r_vlm_mean = std::numeric_limits<double>::quiet_NaN();
    const std::string line = metrics_line(r);
    CHECK(line.rfind("10,0,", 0) == 0);
    CHECK(line.find("nan") != std::string::npos);
    const std::string header = metrics_header();
    CHECK(std::count(line.begin(), line.end(), ',') == std::count(header.begin(), header.end(), ','));
}

TEST_CASE("a short run writes reproducible artifacts") {
    const RunConfig cfg = tiny();
    const fs::path a = scratch("run_a"), b = scratch("run_b");
    const RunResult ra = run_training(cfg, a.string());
    const RunResult rb = run_training(cfg, b.string());
    CHECK(ra.rows.size() == 3);
    CHECK(ra.rows.back().step == 3000);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "checkpoint.txt") == slurp(b / "checkpoint.txt"));
    CHECK(to_ini(parse_config(slurp(a / "config.resolved"))) == to_ini(cfg));

    // one clip per completed episode, views in round-robin order
    CHECK(ra.episodes == 3000 / static_cast<std::size_t>(cfg.env.horizon));
    CHECK(ra.clips_scored == ra.episodes);
    for (std::size_t i = 0; i < ra.rendered_views.size(); ++i)
        CHECK(ra.rendered_views[i].index == static_cast<int>(i % 4));
    CHECK(ra.relevance_updates == 3);
    CHECK(ra.checkpoint.model_ready);
    CHECK_FALSE(ra.checkpoint.r_vlm_history.empty());
    for (double v : ra.checkpoint.r_vlm_history)
        CHECK(v <= 0.0);

    // a different seed gives a different trajectory
    RunConfig other = cfg;
    other.seed = 1;
    CHECK(metrics_line(run_training(other).rows.back()) != metrics_line(ra.rows.back()));
}

TEST_CASE("checkpoints round-trip") {
    const RunResult r = run_training(tiny("cycler"));
    const std::string text = serialise(r.checkpoint);
    std::istringstream in(text);
    const Checkpoint back = read_checkpoint(in);
    CHECK(serialise(back) == text);
    CHECK(back.model.flat() == r.checkpoint.model.flat());
    CHECK(back.reference.size() == r.checkpoint.reference.size());
    const Mlp actor = restore_mlp(back.actor_sizes, back.actor_params);
    CHECK(actor.flat() == r.checkpoint.actor_params);

    std::istringstream bad("not a checkpoint\n");
    CHECK_THROWS_AS(read_checkpoint(bad), InvalidArgument);
    std::istringstream cut(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(read_checkpoint(cut), InvalidArgument);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.txt"), InvalidArgument);
}

TEST_CASE("task-only runs never fit a model") {
    RunConfig cfg = tiny();
    cfg.variant = RewardVariant::TaskOnly;
    const RunResult r = run_training(cfg);
    CHECK(r.relevance_updates == 0);
    CHECK(r.checkpoint.r_vlm_history.empty());
    CHECK(std::isnan(r.rows.back().jensen_lhs));
}

TEST_CASE("periodic relabelling runs") {
    RunConfig cfg = tiny();
    cfg.relabel_mode = RelabelMode::Periodic;
    const RunResult r = run_training(cfg);
    CHECK(r.rows.size() == 3);
    CHECK(std::isfinite(r.rows.back().eval_return_mean));
}

TEST_CASE("numeric failures are reported with a dump") {
    RunConfig cfg = tiny();
    cfg.agent.critic_lr = 1e300;
    const fs::path dir = scratch("fail");
    CHECK_THROWS_AS(run_training(cfg, dir.string()), NumericFailure);
    CHECK(fs::exists(dir / "failure.txt"));
    CHECK(slurp(dir / "failure.txt").find("[resolved config]") != std::string::npos);
}

TEST_CASE("invalid configs are rejected before running") {
    RunConfig cfg = tiny();
    cfg.views.clear();
    CHECK_THROWS_AS(run_training(cfg), ConfigError);
}

TEST_CASE("sweeps keep going past a failed run") {
    RunConfig good = tiny();
    good.schedule.total_steps = 1000;
    RunConfig bad = good;
    bad.agent.critic_lr = 1e300;
    const SweepSummary s = run_sweep({{"mvr", good}, {"broken", bad}}, 2);
    REQUIRE(s.rows.size() == 2);
    CHECK(s.rows[0].failed == 0);
    CHECK(s.rows[1].failed == 2);
    CHECK(s.runs.size() == 4);
    CHECK(s.runs[1].seed == 1);
    CHECK_FALSE(s.runs[2].error.empty());
    CHECK(s.rows[0].normalized_mean == doctest::Approx(1.0));
    CHECK(sweep_csv(s).find("broken") != std::string::npos);
    CHECK(sweep_runs_csv(s).rfind("label,seed,ok,final_return,success_rate,phase_rate,error", 0) == 0);
    CHECK_THROWS_AS(run_sweep({{"mvr", good}}, 0), ConfigError);
}

TEST_CASE("diagnostics on a checkpoint") {
    RunConfig cfg = tiny();
    cfg.diag_rollouts = 10;
    const RunResult r = run_training(cfg);
    const DiagReport d = run_diag(cfg, r.checkpoint);
    CHECK(d.rollouts == 10);
    CHECK(d.episodes.size() == 10);
    CHECK(d.shaping_active);
    CHECK(d.decay.has_value());
    const std::string csv = diag_csv(d);
    CHECK(csv.find("corr_r_mvr_success") != std::string::npos);
    CHECK(csv == diag_csv(run_diag(cfg, r.checkpoint)));
}

TEST_CASE("scripted sequences and the view-variance study") {
    const EnvSpec seat = make_env_spec("seat");
    Rng a(3), b(3);
    const StateSequence s = scripted_sequence(seat, 16, a, 7);
    CHECK(s.length() == 16);
    CHECK(s.episode_id() == 7);
    CHECK(s.as_matrix() == scripted_sequence(seat, 16, b, 7).as_matrix());
    for (const auto& x : s.states())
        CHECK(x.cwiseAbs().maxCoeff() <= 1.0);

    RunConfig cfg = tiny();
    cfg.views = {ViewId{1}};
    CHECK_THROWS_AS(view_variance_study(cfg), ConfigError);
    cfg.views = {ViewId{1}, ViewId{3}};
    const ViewVarianceReport rep = view_variance_study(cfg, {2, 20, 5});
    CHECK(rep.reductions.size() == 2);
    CHECK(rep.median_std_reg.size() == 2);
    CHECK(std::isfinite(rep.median_reduction));
}

TEST_CASE("thread cap defaults to one") {
    CHECK(mvrlab_threads() >= 1);
}
