#pragma once

#include "mvrlab/core.hpp"
#include "mvrlab/envs.hpp"

#include <cstdint>
#include <vector>

namespace mvrlab {

struct BufferEntry {
    StateVec state;
    Eigen::VectorXd action;
    double task_reward = 0.0;
    StateVec next_state;
    bool done = false;
    /// Episode-level bonus attached to the last transition of an episode (sparse trajectory
    /// baseline); zero elsewhere.
    double episode_bonus = 0.0;
    /// Shaped reward materialised by periodic relabelling. Unused in on-sample mode.
    double shaped_reward = 0.0;
    /// Monotone insertion id; seeds per-transition reference draws.
    std::uint64_t serial = 0;
};

/// Ring buffer with FIFO eviction.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity = 100000);

    std::uint64_t push(const Transition& tr, double episode_bonus = 0.0);
    /// Adds to the bonus of the most recently pushed entry.
    void add_bonus_to_last(double bonus);

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return data_.empty(); }

    /// Entries in insertion order (oldest first).
    const BufferEntry& at(std::size_t i) const;
    BufferEntry& at(std::size_t i);

    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  private:
    std::size_t capacity_;
    std::vector<BufferEntry> data_;
    std::size_t head_ = 0;
    std::uint64_t next_serial_ = 0;
};

}  // namespace mvrlab
