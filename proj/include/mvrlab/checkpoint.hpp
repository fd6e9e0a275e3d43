#pragma once

#include "mvrlab/agent.hpp"
#include "mvrlab/core.hpp"
#include "mvrlab/relevance.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mvrlab {

/// Everything a diagnostic run needs from a finished training run. Stored as a line-based
/// text file; see docs/checkpoint_format.md.
struct Checkpoint {
    std::string env_name;
    std::uint64_t seed = 0;
    RewardVariant variant = RewardVariant::Mvr;
    bool model_ready = false;
    RelevanceModel model;
    std::vector<int> actor_sizes;
    std::vector<double> actor_params;
    std::vector<int> critic_sizes;
    std::vector<double> critic_params;
    ReferenceSet reference;
    std::vector<double> r_vlm_history;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
/// Throws InvalidArgument on a malformed file.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

/// Builds an actor network from stored sizes and parameters.
Mlp restore_mlp(const std::vector<int>& sizes, const std::vector<double>& params);

}  // namespace mvrlab
