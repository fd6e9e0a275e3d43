#pragma once

#include "mvrlab/agent.hpp"
#include "mvrlab/envs.hpp"
#include "mvrlab/oracle.hpp"
#include "mvrlab/relevance.hpp"
#include "mvrlab/shaping.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mvrlab {

/// Bad config file, unknown key, or a value that fails validation. Maps to exit code 2.
class ConfigError : public InvalidArgument {
  public:
    using InvalidArgument::InvalidArgument;
};

struct Schedule {
    std::size_t total_steps = 50000;  // T_env
    std::size_t render_every = 9;     // T_render, in completed episodes
    std::size_t update_every = 2000;  // T_update, in environment steps
    std::size_t clip_length = 16;     // T_video
};

enum class ViewSampling { RoundRobin, Random };
enum class RelabelMode { OnSample, Periodic };

struct RunConfig {
    EnvSpec env = make_env_spec("seat");
    OracleConfig oracle;
    TrainConfig relevance;
    int relevance_hidden = 64;
    std::size_t dataset_capacity = RewardDataset::kDefaultCapacity;
    std::size_t reference_k = ReferenceSet::kDefaultK;
    AgentConfig agent;
    ShapingConfig shaping;
    /// Length of the first and last r_vlm windows compared by the decay metric.
    std::size_t decay_window = 2000;
    Schedule schedule;
    std::vector<ViewId> views{ViewId{0}, ViewId{1}, ViewId{2}, ViewId{3}};
    ViewSampling view_sampling = ViewSampling::RoundRobin;
    WindowMode window = WindowMode::Final;
    RelabelMode relabel_mode = RelabelMode::OnSample;
    RewardVariant variant = RewardVariant::Mvr;
    std::uint64_t seed = 0;
    std::size_t eval_episodes = 10;
    std::size_t diag_rollouts = 100;
    /// Record wall-clock time in metrics rows. Off by default so metrics files are
    /// byte-reproducible.
    bool wall_clock = false;
};

/// Throws ConfigError.
void validate(const RunConfig& cfg);

/// "section.key=value"
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Parses INI text over the defaults, applies overrides, then validates.
RunConfig parse_config(const std::string& ini_text,
                       const std::vector<std::pair<std::string, std::string>>& overrides = {});
RunConfig load_config(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Every key with its resolved value; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& cfg);

/// Defaults for a named environment ("cycler" or "seat").
RunConfig default_run_config(const std::string& env_name);

/// Sorted "section.key" names accepted by parse_config.
std::vector<std::string> config_keys();

std::string to_string(ViewSampling v);
std::string to_string(RelabelMode m);
std::string to_string(WindowMode w);

}  // namespace mvrlab
