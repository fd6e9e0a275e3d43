// Command-line entry point: train, ablate, diag, grad-check.
#include "mvrlab/orchestrator.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace mvrlab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

RunConfig load(const std::string& path, const std::vector<std::string>& overrides, const std::optional<std::uint64_t>& seed) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& o : overrides)
        kv.push_back(parse_override(o));
    if (seed)
        kv.emplace_back("run.seed", std::to_string(*seed));
    return load_config(path, kv);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write '" + p.string() + "'");
    out << text;
}

int grad_check_command(std::size_t seeds, double eps) {
    double worst_match = 0.0, worst_reg = 0.0, worst_critic = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        Rng rng(1000 + s);
        const int dim = 4;
        RewardDataset d;
        for (int i = 0; i < 6; ++i) {
            std::vector<StateVec> states;
            for (int t = 0; t < 5; ++t)
                states.push_back(StateVec::NullaryExpr(dim, [&](Eigen::Index) { return rng.uniform(-1, 1); }));
            SimilaritySample x;
            x.sequence = StateSequence(states, i);
            x.clip_embedding = Eigen::VectorXd::NullaryExpr(8, [&](Eigen::Index) { return rng.normal(); }).normalized();
            x.text_score = rng.uniform();
            d.append(x);
        }
        std::vector<ComparisonPair> pairs;
        for (std::size_t i = 0; i + 1 < d.size(); ++i)
            pairs.emplace_back(d[i], d[i + 1]);
        const RelevanceModel m = RelevanceModel::init(dim, 16, s);
        worst_match = std::max(worst_match, grad_check(m, pairs, eps, {1.0, 0.0}).max_rel_error);
        // The matching-only check above passing means this one isolates the L_reg gradient.
        worst_reg = std::max(worst_reg, grad_check(m, pairs, eps, {1.0, 1.0}).max_rel_error);

        Mlp critic({dim + 2, 32, 32, 1}, rng);
        Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(dim + 2, 16, [&](Eigen::Index, Eigen::Index) { return rng.uniform(-1, 1); });
        Eigen::MatrixXd Y = Eigen::MatrixXd::NullaryExpr(1, 16, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
        worst_critic = std::max(worst_critic, mse_grad_check(critic, X, Y, eps).max_rel_error);
    }
    std::cout << "matching loss   max relative error " << worst_match << "\n"
              << "matching + reg  max relative error " << worst_reg << "\n"
              << "critic loss     max relative error " << worst_critic << "\n";
    return std::max({worst_match, worst_reg, worst_critic}) <= 1e-4 ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mvrlab: multi-view relevance reward shaping experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "runs/latest", checkpoint_path, variants_arg = "mvr,task_only";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::size_t seeds = 5;
    double eps = 1e-5;

    auto* train = app.add_subcommand("train", "Run one training job");
    train->add_option("--config", config_path, "INI config file")->required();
    train->add_option("--seed", seed, "Override run.seed");
    train->add_option("--override", overrides, "section.key=value (repeatable)");
    train->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Sweep reward variants over seeds");
    ablate->add_option("--config", config_path, "INI config file")->required();
    ablate->add_option("--variants", variants_arg, "Comma-separated variants")->capture_default_str();
    ablate->add_option("--seeds", seeds, "Seeds per variant")->capture_default_str();
    ablate->add_option("--override", overrides, "section.key=value (repeatable)");
    ablate->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* diag = app.add_subcommand("diag", "Correlation, Jensen-gap and decay diagnostics for a checkpoint");
    diag->add_option("--config", config_path, "INI config file")->required();
    diag->add_option("--checkpoint", checkpoint_path, "checkpoint.txt from a training run")->required();
    diag->add_option("--seed", seed, "Override run.seed");
    diag->add_option("--override", overrides, "section.key=value (repeatable)");
    diag->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* vs = app.add_subcommand("view-study", "Across-view relevance spread with and without L_reg");
    vs->add_option("--config", config_path, "INI config file")->required();
    vs->add_option("--seeds", seeds, "Seeds")->capture_default_str();
    vs->add_option("--override", overrides, "section.key=value (repeatable)");

    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the relevance and critic gradients");
    gc->add_option("--seeds", seeds, "Random instances")->capture_default_str();
    gc->add_option("--eps", eps, "Central-difference step")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gc)
            return grad_check_command(seeds, eps);

        const RunConfig cfg = load(config_path, overrides, seed);
        std::filesystem::create_directories(out_dir);
        const std::filesystem::path dir(out_dir);

        if (*vs) {
            ViewVarianceOptions opts;
            opts.seeds = seeds;
            const ViewVarianceReport r = view_variance_study(cfg, opts);
            std::cout << "seed,median_std_noreg,median_std_reg,reduction\n";
            for (std::size_t i = 0; i < r.reductions.size(); ++i)
                std::cout << cfg.seed + i << ',' << r.median_std_noreg[i] << ',' << r.median_std_reg[i] << ','
                          << r.reductions[i] << "\n";
            std::cout << "median reduction " << r.median_reduction << "\n";
            return 0;
        }
        if (*train) {
            const RunResult r = run_training(cfg, out_dir);
            std::ostringstream summary;
            summary << "env " << cfg.env.name << "\nvariant " << to_string(cfg.variant) << "\nseed " << cfg.seed
                    << "\nsteps " << cfg.schedule.total_steps << "\nepisodes " << r.episodes << "\nclips_scored "
                    << r.clips_scored << "\nrelevance_updates " << r.relevance_updates << "\nfinal_return_mean "
                    << r.final_eval.mean_return << "\nfinal_return_std " << r.final_eval.std_return
                    << "\nfinal_success_rate " << r.final_eval.success_rate << "\nfinal_phase_rate "
                    << r.final_eval.mean_phase_rate << "\n";
            write_text(dir / "summary.txt", summary.str());
            std::cout << "episodes " << r.episodes << ", clips scored " << r.clips_scored << ", final return "
                      << r.final_eval.mean_return << ", success " << r.final_eval.success_rate << "\n"
                      << "wrote " << (dir / "metrics.csv").string() << "\n";
            return 0;
        }
        if (*ablate) {
            std::vector<RewardVariant> variants;
            std::stringstream ss(variants_arg);
            std::string item;
            while (std::getline(ss, item, ','))
                variants.push_back(parse_reward_variant(item));
            const SweepSummary s = run_ablation(cfg, variants, seeds);
            write_text(dir / "ablation.csv", sweep_csv(s));
            write_text(dir / "summary.txt", sweep_table(s));
            write_text(dir / "runs.csv", sweep_runs_csv(s));
            write_text(dir / "config.resolved", to_ini(cfg));
            std::cout << sweep_table(s);
            for (const auto& run : s.runs)
                if (!run.ok)
                    std::cerr << "run " << run.label << " seed " << run.seed << " failed: " << run.error << "\n";
            return 0;
        }
        if (*diag) {
            if (!std::filesystem::exists(checkpoint_path))
                throw ConfigError("checkpoint '" + checkpoint_path + "' does not exist");
            const Checkpoint ck = load_checkpoint(checkpoint_path);
            const DiagReport rep = run_diag(cfg, ck);
            write_text(dir / "diag.csv", diag_csv(rep));
            std::cout << diag_csv(rep);
            return 0;
        }
    } catch (const NumericFailure& e) {
        std::cerr << "error: " << e.what() << "\n" << e.dump() << "\n";
        return kExitNumeric;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
