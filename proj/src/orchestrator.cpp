#include "mvrlab/orchestrator.hpp"

#include "mvrlab/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace mvrlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) {
    if (std::isnan(x))
        return "nan";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.empty())
        return kNaN;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

TrainConfig relevance_config_for(const RunConfig& cfg) {
    TrainConfig t = cfg.relevance;
    switch (cfg.variant) {
    case RewardVariant::MvrNoReg:
        t.reg_weight = 0.0;
        break;
    case RewardVariant::MvrDirect:
        t.objective = RelevanceObjective::Direct;
        break;
    case RewardVariant::ImageSim:
        t.objective = RelevanceObjective::ImageRegression;
        break;
    default:
        t.objective = RelevanceObjective::Matching;
        break;
    }
    return t;
}

bool shapes_with_reference(RewardVariant v) {
    return v == RewardVariant::Mvr || v == RewardVariant::MvrNoReg || v == RewardVariant::MvrDirect;
}

// Stream tags for Rng::derived so each consumer has an independent generator.
enum : std::uint64_t {
    kAgentStream = 1,
    kModelStream,
    kViewStream,
    kWindowStream,
    kTrainStream,
    kDiagStream,
};

}  // namespace

std::string metrics_header() {
    return "step,episode,eval_return_mean,eval_return_std,success_rate,r_vlm_mean,r_vlm_std,jensen_lhs,jensen_rhs,"
           "decay_ratio,view_id_last_rendered,wall_ms";
}

std::string metrics_line(const MetricsRow& r) {
    std::ostringstream o;
    o << r.step << ',' << r.episode << ',' << fmt(r.eval_return_mean) << ',' << fmt(r.eval_return_std) << ','
      << fmt(r.success_rate) << ',' << fmt(r.r_vlm_mean) << ',' << fmt(r.r_vlm_std) << ',' << fmt(r.jensen_lhs)
      << ',' << fmt(r.jensen_rhs) << ',' << fmt(r.decay_ratio) << ',' << r.view_id_last_rendered << ','
      << fmt(r.wall_ms);
    return o.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InvalidArgument("cannot write metrics file '" + path + "'");
    out << metrics_header() << "\n";
    for (const auto& r : rows)
        out << metrics_line(r) << "\n";
}

namespace {

class TrainingRun {
  public:
    TrainingRun(const RunConfig& cfg, std::string out_dir)
        : cfg_(cfg),
          out_dir_(std::move(out_dir)),
          spec_(cfg.env),
          oracle_(cfg.oracle, cfg.env),
          prompt_(default_prompt(cfg.env)),
          agent_(cfg.env.state_dim, cfg.env.action_dim, cfg.agent, Rng::derived(cfg.seed, kAgentStream).next()),
          buffer_(cfg.agent.buffer_capacity),
          dataset_(cfg.dataset_capacity),
          reference_(cfg.reference_k),
          model_(RelevanceModel::init(cfg.env.state_dim, cfg.relevance_hidden,
                                      Rng::derived(cfg.seed, kModelStream).next())),
          provider_(cfg.variant),
          train_cfg_(relevance_config_for(cfg)),
          view_rng_(Rng::derived(cfg.seed, kViewStream)),
          window_rng_(Rng::derived(cfg.seed, kWindowStream)),
          train_rng_(Rng::derived(cfg.seed, kTrainStream)),
          env_(cfg.env),
          start_(std::chrono::steady_clock::now()) {}

    RunResult run();

  private:
    RewardContext context() const {
        RewardContext ctx;
        ctx.model = &model_;
        ctx.reference = &ref_cache_;
        ctx.shaping = cfg_.shaping;
        ctx.run_seed = cfg_.seed;
        ctx.model_ready = model_ready_;
        ctx.use_stored_shaping = relabelled_;
        return ctx;
    }

    bool shaping_active() const {
        return shapes_with_reference(cfg_.variant) && model_ready_ && !ref_cache_.empty();
    }

    void refresh_reference_cache() {
        if (cache_version_ == reference_.version() && cache_model_gen_ == model_gen_)
            return;
        ref_cache_ = ReferenceRelevance(model_, reference_);
        cache_version_ = reference_.version();
        cache_model_gen_ = model_gen_;
    }

    ViewId next_view() {
        if (cfg_.view_sampling == ViewSampling::RoundRobin)
            return cfg_.views[view_cursor_++ % cfg_.views.size()];
        return cfg_.views[view_rng_.index(cfg_.views.size())];
    }

    void finish_episode(const std::vector<StateVec>& states);
    void update_relevance(std::size_t step);
    void emit_row(std::size_t step);
    [[noreturn]] void fail(const std::string& what, std::size_t step, const std::string& detail);

    const RunConfig& cfg_;
    std::string out_dir_;
    EnvSpec spec_;
    SyntheticOracle oracle_;
    TaskPrompt prompt_;
    DdpgAgent agent_;
    ReplayBuffer buffer_;
    RewardDataset dataset_;
    ReferenceSet reference_;
    RelevanceModel model_;
    RewardProvider provider_;
    TrainConfig train_cfg_;
    Rng view_rng_;
    Rng window_rng_;
    Rng train_rng_;
    Environment env_;

    bool model_ready_ = false;
    bool relabelled_ = false;
    std::uint64_t model_gen_ = 0;
    ReferenceRelevance ref_cache_;
    std::uint64_t cache_version_ = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t cache_model_gen_ = std::numeric_limits<std::uint64_t>::max();
    std::size_t view_cursor_ = 0;
    std::size_t episodes_ = 0;
    std::vector<double> r_vlm_history_;
    std::size_t history_reported_ = 0;
    RunResult result_;
    std::chrono::steady_clock::time_point start_;
};

void TrainingRun::fail(const std::string& what, std::size_t step, const std::string& detail) {
    std::ostringstream dump;
    dump << "numeric failure: " << what << "\nstep " << step << "\nepisode " << episodes_ << "\n"
         << detail << "\n\n[resolved config]\n"
         << to_ini(cfg_);
    if (!out_dir_.empty()) {
        std::ofstream out(std::filesystem::path(out_dir_) / "failure.txt");
        out << dump.str();
    }
    throw NumericFailure(what + " at step " + std::to_string(step), dump.str());
}

void TrainingRun::finish_episode(const std::vector<StateVec>& states) {
    ++episodes_;
    const StateSequence seq(states, static_cast<std::int64_t>(episodes_ - 1));

    if (cfg_.variant == RewardVariant::TrajSparse) {
        // End-of-trajectory score of the whole episode from the first configured view.
        const RenderedClip full = render(spec_, seq, cfg_.views.front(), RenderOptions{seq.length()});
        buffer_.add_bonus_to_last(oracle_.score_text(full, prompt_));
    }

    if (episodes_ % cfg_.schedule.render_every != 0)
        return;
    const ViewId view = next_view();
    RenderOptions opts{cfg_.schedule.clip_length, cfg_.window, &window_rng_};
    const RenderedClip clip = render(spec_, seq, view, opts);
    SimilaritySample sample;
    sample.sequence = clip.source;
    sample.clip_embedding = oracle_.embed(clip);
    sample.text_score = oracle_.score_text(clip, prompt_);
    sample.view = view;
    for (std::size_t t = 0; t < clip.source.length(); ++t)
        sample.frame_scores.push_back(oracle_.image_score(clip, t, prompt_));
    dataset_.append(sample);
    reference_.offer(sample.sequence, sample.text_score);
    result_.rendered_views.push_back(view);
    ++result_.clips_scored;
}

void TrainingRun::update_relevance(std::size_t step) {
    if (provider_.uses_model() && dataset_.size() >= 2) {
        TrainReport rep;
        model_ = train_relevance(std::move(model_), dataset_, train_cfg_, train_rng_, &rep);
        if (!rep.finite || !model_.all_finite())
            fail("non-finite relevance loss", step,
                 "relevance epochs " + std::to_string(rep.epochs) + ", best holdout " + fmt(rep.best_holdout_loss));
        model_ready_ = true;
        ++model_gen_;
        ++result_.relevance_updates;
    }
    refresh_reference_cache();
    if (cfg_.relabel_mode == RelabelMode::Periodic && shaping_active()) {
        relabel_buffer(buffer_, model_, reference_, cfg_.shaping, cfg_.seed);
        relabelled_ = true;
    }
}

void TrainingRun::emit_row(std::size_t step) {
    const EvalResult ev = evaluate(agent_, spec_, cfg_.eval_episodes);
    MetricsRow row;
    row.step = step;
    row.episode = episodes_;
    row.eval_return_mean = ev.mean_return;
    row.eval_return_std = ev.std_return;
    row.success_rate = ev.success_rate;
    const std::vector<double> recent(r_vlm_history_.begin() + static_cast<std::ptrdiff_t>(history_reported_),
                                     r_vlm_history_.end());
    history_reported_ = r_vlm_history_.size();
    row.r_vlm_mean = mean_of(recent);
    row.r_vlm_std = std_of(recent);
    row.jensen_lhs = row.jensen_rhs = kNaN;
    if (shaping_active()) {
        std::vector<double> lf;
        for (const auto& ep : ev.episodes) {
            const Eigen::VectorXd f = f_mvr_batch(model_, ep.states.as_matrix());
            lf.insert(lf.end(), f.data(), f.data() + f.size());
        }
        const JensenGap g = jensen_gap(lf, ref_cache_.values());
        row.jensen_lhs = g.lhs;
        row.jensen_rhs = g.rhs;
    }
    row.decay_ratio = r_vlm_history_.size() >= 2 * cfg_.decay_window
                          ? decay_metric(r_vlm_history_, cfg_.decay_window).std_ratio
                          : kNaN;
    row.view_id_last_rendered = result_.rendered_views.empty() ? -1 : result_.rendered_views.back().index;
    row.wall_ms = cfg_.wall_clock ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
                                        .count()
                                  : 0.0;
    result_.rows.push_back(row);
    result_.final_eval = ev;
}

RunResult TrainingRun::run() {
    std::vector<StateVec> states{env_.reset()};
    for (std::size_t step = 1; step <= cfg_.schedule.total_steps; ++step) {
        const StateVec s = env_.state();
        const Eigen::VectorXd a = step <= cfg_.agent.warmup_steps ? agent_.random_action() : agent_.act(s, true);
        const Transition tr = env_.step(a);
        const std::uint64_t serial = buffer_.push(tr);
        states.push_back(tr.next_state);

        if (shaping_active()) {
            const VlmReward v = r_vlm_from_values(f_mvr(model_, tr.next_state), ref_cache_, cfg_.shaping,
                                                  transition_draw_seed(cfg_.seed, serial));
            r_vlm_history_.push_back(v.value);
        }

        if (step > cfg_.agent.warmup_steps && step % cfg_.agent.update_every == 0 &&
            buffer_.size() >= cfg_.agent.batch_size) {
            const RewardContext ctx = context();
            for (std::size_t g = 0; g < cfg_.agent.gradient_steps; ++g) {
                const UpdateStats st = agent_.update(buffer_, provider_, ctx);
                if (!std::isfinite(st.critic_loss) || !std::isfinite(st.actor_objective))
                    fail("non-finite critic or actor loss", step,
                         "critic_loss " + fmt(st.critic_loss) + ", actor_objective " + fmt(st.actor_objective) +
                             ", mean_reward " + fmt(st.mean_reward));
            }
        }

        if (tr.done) {
            finish_episode(states);
            states.assign(1, env_.reset());
            if (cfg_.agent.noise_correlation > 0.0)
                agent_.reset_noise();
        }
        if (step % cfg_.schedule.update_every == 0) {
            update_relevance(step);
            emit_row(step);
        }
    }
    if (result_.rows.empty() || result_.rows.back().step != cfg_.schedule.total_steps)
        emit_row(cfg_.schedule.total_steps);

    result_.episodes = episodes_;
    result_.dataset = dataset_;
    Checkpoint& ck = result_.checkpoint;
    ck.env_name = spec_.name;
    ck.seed = cfg_.seed;
    ck.variant = cfg_.variant;
    ck.model_ready = model_ready_;
    ck.model = model_;
    ck.actor_sizes.push_back(agent_.actor().input_dim());
    for (const auto& w : agent_.actor().weights())
        ck.actor_sizes.push_back(static_cast<int>(w.rows()));
    ck.actor_params = agent_.actor().flat();
    ck.critic_sizes.push_back(agent_.critic().input_dim());
    for (const auto& w : agent_.critic().weights())
        ck.critic_sizes.push_back(static_cast<int>(w.rows()));
    ck.critic_params = agent_.critic().flat();
    ck.reference = reference_;
    ck.r_vlm_history = r_vlm_history_;

    if (!out_dir_.empty()) {
        const std::filesystem::path dir(out_dir_);
        write_metrics_csv((dir / "metrics.csv").string(), result_.rows);
        save_checkpoint((dir / "checkpoint.txt").string(), ck);
    }
    return std::move(result_);
}

}  // namespace

RunResult run_training(const RunConfig& cfg, const std::string& out_dir) {
    validate(cfg);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream echo(std::filesystem::path(out_dir) / "config.resolved");
        if (!echo)
            throw ConfigError("cannot write to output directory '" + out_dir + "'");
        echo << to_ini(cfg);
    }
    TrainingRun run(cfg, out_dir);
    return run.run();
}

std::size_t mvrlab_threads() {
    if (const char* v = std::getenv("MVRLAB_THREADS")) {
        std::size_t n = 0;
        const std::string s(v);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec == std::errc() && p == s.data() + s.size() && n > 0)
            return n;
    }
    return 1;
}

SweepSummary run_sweep(const std::vector<SweepArm>& arms, std::size_t seeds, const std::string& reference_label) {
    if (seeds == 0)
        throw ConfigError("a sweep needs at least one seed per arm");
    SweepSummary summary;
    for (const auto& arm : arms) {
        for (std::size_t i = 0; i < seeds; ++i) {
            SweepRun r;
            r.label = arm.label;
            r.seed = arm.config.seed + i;
            summary.runs.push_back(r);
        }
    }

    std::vector<const RunConfig*> base;
    for (const auto& arm : arms)
        for (std::size_t i = 0; i < seeds; ++i)
            base.push_back(&arm.config);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < summary.runs.size(); j = next++) {
            SweepRun& r = summary.runs[j];
            try {
                RunConfig c = *base[j];
                c.seed = r.seed;
                c.env.rng_seed = r.seed;
                c.oracle.rng_seed = r.seed;
                const RunResult res = run_training(c);
                r.final_return = res.final_eval.mean_return;
                r.success_rate = res.final_eval.success_rate;
                r.phase_rate = res.final_eval.mean_phase_rate;
                r.ok = true;
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        }
    };
    const std::size_t n_threads = std::min(mvrlab_threads(), summary.runs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();

    for (const auto& arm : arms) {
        SweepRow row;
        row.label = arm.label;
        std::vector<double> ret, succ, phase;
        for (const auto& r : summary.runs) {
            if (r.label != arm.label)
                continue;
            ++row.runs;
            if (!r.ok) {
                ++row.failed;
                continue;
            }
            ret.push_back(r.final_return);
            succ.push_back(r.success_rate);
            phase.push_back(r.phase_rate);
        }
        row.mean_return = mean_of(ret);
        row.std_return = std_of(ret);
        row.mean_success = mean_of(succ);
        row.mean_phase_rate = mean_of(phase);
        summary.rows.push_back(row);
    }
    double ref = kNaN;
    for (const auto& row : summary.rows)
        if (row.label == reference_label && row.failed == 0)
            ref = row.mean_return;
    for (auto& row : summary.rows) {
        const bool usable = std::isfinite(ref) && ref != 0.0 && row.failed == 0;
        row.normalized_mean = usable ? row.mean_return / ref : kNaN;
        row.normalized_std = usable ? row.std_return / std::abs(ref) : kNaN;
    }
    return summary;
}

SweepSummary run_ablation(const RunConfig& base, const std::vector<RewardVariant>& variants, std::size_t seeds) {
    if (variants.empty())
        throw ConfigError("ablation needs at least one variant");
    std::vector<SweepArm> arms;
    for (auto v : variants) {
        RunConfig c = base;
        c.variant = v;
        arms.push_back({to_string(v), c});
    }
    return run_sweep(arms, seeds, "mvr");
}

std::string sweep_csv(const SweepSummary& s) {
    std::ostringstream o;
    o << "label,runs,failed,mean_return,std_return,normalized_mean,normalized_std,mean_success,mean_phase_rate\n";
    for (const auto& r : s.rows)
        o << r.label << ',' << r.runs << ',' << r.failed << ',' << fmt(r.mean_return) << ',' << fmt(r.std_return)
          << ',' << fmt(r.normalized_mean) << ',' << fmt(r.normalized_std) << ',' << fmt(r.mean_success) << ','
          << fmt(r.mean_phase_rate) << '\n';
    return o.str();
}

std::string sweep_runs_csv(const SweepSummary& s) {
    std::ostringstream o;
    o << "label,seed,ok,final_return,success_rate,phase_rate,error\n";
    for (const auto& r : s.runs)
        o << r.label << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',' << fmt(r.final_return) << ','
          << fmt(r.success_rate) << ',' << fmt(r.phase_rate) << ',' << '"' << r.error << '"' << '\n';
    return o.str();
}

std::string sweep_table(const SweepSummary& s) {
    std::ostringstream o;
    auto num = [](double x, int prec) {
        if (std::isnan(x))
            return std::string("-");
        std::ostringstream t;
        t << std::fixed << std::setprecision(prec) << x;
        return t.str();
    };
    o << std::left << std::setw(18) << "variant" << std::right << std::setw(6) << "runs" << std::setw(8) << "failed"
      << std::setw(22) << "return (mean+-std)" << std::setw(22) << "normalized" << std::setw(10) << "success"
      << std::setw(12) << "phase_rate" << "\n";
    for (const auto& r : s.rows) {
        const std::string status = r.failed ? "  FAILED" : "";
        o << std::left << std::setw(18) << r.label << std::right << std::setw(6) << r.runs << std::setw(8) << r.failed
          << std::setw(22) << (num(r.mean_return, 2) + " +- " + num(r.std_return, 2)) << std::setw(22)
          << (num(r.normalized_mean, 3) + " +- " + num(r.normalized_std, 3)) << std::setw(10) << num(r.mean_success, 2)
          << std::setw(12) << num(r.mean_phase_rate, 3) << status << "\n";
    }
    return o.str();
}

DiagReport run_diag(const RunConfig& cfg, const Checkpoint& ck) {
    validate(cfg);
    if (ck.env_name != cfg.env.name)
        throw ConfigError("checkpoint environment '" + ck.env_name + "' does not match config '" + cfg.env.name + "'");
    if (ck.model.state_dim() != cfg.env.state_dim)
        throw ConfigError("checkpoint relevance model does not match the environment");
    if (cfg.diag_rollouts < 2)
        throw ConfigError("run.diag_rollouts must be at least 2");

    DdpgAgent agent(cfg.env.state_dim, cfg.env.action_dim, cfg.agent, 0);
    agent.actor() = restore_mlp(ck.actor_sizes, ck.actor_params);
    if (agent.actor().input_dim() != cfg.env.state_dim || agent.actor().output_dim() != cfg.env.action_dim)
        throw ConfigError("checkpoint actor does not match the environment");

    DiagReport rep;
    rep.rollouts = cfg.diag_rollouts;
    const ReferenceRelevance ref(ck.model, ck.reference);
    rep.shaping_active = ck.model_ready && !ref.empty();
    const SyntheticOracle oracle(cfg.oracle, cfg.env);
    const TaskPrompt prompt = default_prompt(cfg.env);
    Rng rng = Rng::derived(ck.seed, kDiagStream);

    std::vector<double> all_r_vlm, learner_f;
    std::size_t successes = 0;
    for (std::size_t i = 0; i < cfg.diag_rollouts; ++i) {
        // Noise from greedy up to heavy exploration, so both outcomes appear.
        const double noise = 0.6 * static_cast<double>(i) / static_cast<double>(cfg.diag_rollouts - 1);
        EnvSpec spec = cfg.env;
        spec.rng_seed = ck.seed + i;
        const EpisodeRecord ep = rollout(agent, spec, noise > 0.0 ? noise : -1.0, rng, static_cast<std::int64_t>(i));
        const Eigen::MatrixXd S = ep.states.as_matrix();
        const Eigen::VectorXd f = f_mvr_batch(ck.model, S);
        EpisodeSummary es;
        es.success = ep.success;
        successes += ep.success ? 1 : 0;
        double sum_f = 0.0, sum_r_mvr = 0.0, sum_task = 0.0;
        for (std::size_t t = 0; t < ep.task_rewards.size(); ++t) {
            const double f_next = f[static_cast<Eigen::Index>(t + 1)];
            double rv = 0.0;
            if (rep.shaping_active) {
                rv = r_vlm_from_values(f_next, ref, cfg.shaping,
                                       transition_draw_seed(ck.seed, i * ep.task_rewards.size() + t))
                         .value;
                all_r_vlm.push_back(rv);
            }
            sum_f += f_next;
            sum_task += ep.task_rewards[t];
            sum_r_mvr += r_mvr(ep.task_rewards[t], rv, cfg.shaping.w);
        }
        learner_f.insert(learner_f.end(), f.data(), f.data() + f.size());
        const double n = static_cast<double>(ep.task_rewards.size());
        es.mean_f_mvr = sum_f / n;
        es.mean_r_mvr = sum_r_mvr / n;
        es.mean_r_task = sum_task / n;
        const RenderedClip clip = render(cfg.env, ep.states, cfg.views.front(), RenderOptions{cfg.schedule.clip_length});
        es.mean_f_vlm = oracle.score_text(clip, prompt);
        rep.episodes.push_back(es);
    }
    rep.success_rate = static_cast<double>(successes) / static_cast<double>(cfg.diag_rollouts);
    rep.diagnostics = correlation_report(rep.episodes);
    rep.diagnostics.r_vlm_mean = all_r_vlm.empty() ? 0.0 : mean_of(all_r_vlm);
    rep.diagnostics.r_vlm_std = all_r_vlm.empty() ? 0.0 : std_of(all_r_vlm);
    if (rep.shaping_active)
        rep.diagnostics.jensen = jensen_gap(learner_f, ref.values());

    // Shuffled-label null for corr(r_mvr, success).
    if (rep.diagnostics.corr_r_mvr_success) {
        std::vector<double> x, y;
        for (const auto& e : rep.episodes) {
            x.push_back(e.mean_r_mvr);
            y.push_back(e.success ? 1.0 : 0.0);
        }
        std::vector<double> null;
        for (int k = 0; k < 1000; ++k) {
            std::shuffle(y.begin(), y.end(), rng.engine());
            null.push_back(pearson(x, y).value_or(0.0));
        }
        std::sort(null.begin(), null.end());
        rep.null_corr_q95 = null[950];
    }
    if (ck.r_vlm_history.size() >= 2 * cfg.decay_window)
        rep.decay = decay_metric(ck.r_vlm_history, cfg.decay_window);
    return rep;
}

std::string diag_csv(const DiagReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("nan"); };
    std::ostringstream o;
    const auto& d = r.diagnostics;
    o << "key,value\n";
    o << "shaping_active," << (r.shaping_active ? 1 : 0) << "\n";
    o << "rollouts," << r.rollouts << "\n";
    o << "success_rate," << fmt(r.success_rate) << "\n";
    o << "corr_f_vlm_success," << opt(d.corr_f_vlm_success) << "\n";
    o << "corr_f_mvr_success," << opt(d.corr_f_mvr_success) << "\n";
    o << "corr_r_mvr_success," << opt(d.corr_r_mvr_success) << "\n";
    o << "corr_r_task_success," << opt(d.corr_r_task_success) << "\n";
    o << "corr_f_vlm_task," << opt(d.corr_f_vlm_task) << "\n";
    o << "corr_f_mvr_task," << opt(d.corr_f_mvr_task) << "\n";
    o << "corr_r_mvr_task," << opt(d.corr_r_mvr_task) << "\n";
    o << "null_corr_r_mvr_success_q95," << opt(r.null_corr_q95) << "\n";
    o << "r_vlm_mean," << fmt(d.r_vlm_mean) << "\n";
    o << "r_vlm_std," << fmt(d.r_vlm_std) << "\n";
    o << "jensen_lhs," << (r.shaping_active ? fmt(d.jensen.lhs) : "nan") << "\n";
    o << "jensen_rhs," << (r.shaping_active ? fmt(d.jensen.rhs) : "nan") << "\n";
    o << "decay_std_ratio," << (r.decay ? fmt(r.decay->std_ratio) : "nan") << "\n";
    o << "decay_magnitude_ratio," << (r.decay ? fmt(r.decay->mean_magnitude_ratio) : "nan") << "\n";
    o << "decay_degenerate," << (r.decay ? (r.decay->degenerate ? 1 : 0) : 0) << "\n";
    return o.str();
}

StateSequence scripted_sequence(const EnvSpec& spec, std::size_t length, Rng& rng, std::int64_t id) {
    if (length < 2)
        throw InvalidArgument("scripted sequences need at least two states");
    StateVec s(spec.state_dim);
    std::vector<StateVec> states;
    if (spec.is_cycler()) {
        s << rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(0.0, 1.0), 0.0;
        const double rate = rng.uniform(-1.0, 1.0);
        const double push = rng.uniform(-1.0, 1.0);
        states.push_back(s);
        while (states.size() < length) {
            Eigen::VectorXd a(2);
            a << rate + rng.normal(0.0, 0.2), push + rng.normal(0.0, 0.2);
            s = env_step(spec, s, a.cwiseMax(-1.0).cwiseMin(1.0)).next_state;
            states.push_back(s);
        }
    } else {
        s << rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05);
        const Eigen::Vector2d target(rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.95));
        states.push_back(s);
        while (states.size() < length) {
            Eigen::VectorXd a = 10.0 * (target - s.head<2>()) - 20.0 * s.tail<2>();
            for (Eigen::Index i = 0; i < a.size(); ++i)
                a[i] += rng.normal(0.0, 0.1);
            s = env_step(spec, s, a.cwiseMax(-1.0).cwiseMin(1.0)).next_state;
            states.push_back(s);
        }
    }
    return StateSequence(std::move(states), id);
}

ViewVarianceReport view_variance_study(const RunConfig& cfg, const ViewVarianceOptions& opts) {
    validate(cfg);
    if (cfg.views.size() < 2)
        throw ConfigError("the view-variance study needs at least two views");
    if (opts.seeds == 0 || opts.sequences < 4 || opts.probes == 0)
        throw InvalidArgument("view-variance study needs seeds, >= 4 sequences and probes");
    const SyntheticOracle oracle(cfg.oracle, cfg.env);
    const TaskPrompt prompt = default_prompt(cfg.env);
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t h = v.size() / 2;
        return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    };

    ViewVarianceReport rep;
    for (std::size_t k = 0; k < opts.seeds; ++k) {
        const std::uint64_t seed = cfg.seed + k;
        Rng data_rng = Rng::derived(seed, 0x7a11);
        std::vector<StateSequence> train, probes;
        for (std::size_t i = 0; i < opts.sequences; ++i)
            train.push_back(scripted_sequence(cfg.env, cfg.schedule.clip_length, data_rng, static_cast<std::int64_t>(i)));
        for (std::size_t i = 0; i < opts.probes; ++i)
            probes.push_back(scripted_sequence(cfg.env, cfg.schedule.clip_length, data_rng,
                                               static_cast<std::int64_t>(opts.sequences + i)));

        // relevance[with_reg][probe][view]
        std::vector<std::vector<double>> relevance[2];
        for (int with_reg = 0; with_reg < 2; ++with_reg) {
            relevance[with_reg].assign(probes.size(), {});
            TrainConfig tc = cfg.relevance;
            tc.objective = RelevanceObjective::Matching;
            tc.reg_weight = with_reg ? cfg.relevance.reg_weight : 0.0;
            for (const ViewId v : cfg.views) {
                RewardDataset d(train.size());
                for (const auto& q : train) {
                    const RenderedClip clip = render(cfg.env, q, v, RenderOptions{cfg.schedule.clip_length});
                    SimilaritySample x;
                    x.sequence = q;
                    x.clip_embedding = oracle.embed(clip);
                    x.text_score = oracle.score_text(clip, prompt);
                    x.view = v;
                    d.append(std::move(x));
                }
                // Same init and same pair draws with and without the regularizer.
                Rng train_rng = Rng::derived(seed, 0x7a12);
                const RelevanceModel m = train_relevance(
                    RelevanceModel::init(cfg.env.state_dim, cfg.relevance_hidden, seed), d, tc, train_rng);
                for (std::size_t p = 0; p < probes.size(); ++p)
                    relevance[with_reg][p].push_back(mean_relevance(m, probes[p]));
            }
        }
        std::vector<double> spread[2];
        for (int with_reg = 0; with_reg < 2; ++with_reg)
            for (const auto& per_view : relevance[with_reg])
                spread[with_reg].push_back(std_of(per_view));
        const double noreg = median(spread[0]);
        const double reg = median(spread[1]);
        rep.median_std_noreg.push_back(noreg);
        rep.median_std_reg.push_back(reg);
        rep.reductions.push_back(noreg > 0.0 ? 1.0 - reg / noreg : 0.0);
    }
    rep.median_reduction = median(rep.reductions);
    return rep;
}

}  // namespace mvrlab
