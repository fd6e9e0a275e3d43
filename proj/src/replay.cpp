#include "mvrlab/replay.hpp"

namespace mvrlab {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0)
        throw InvalidArgument("replay buffer capacity must be positive");
}

std::uint64_t ReplayBuffer::push(const Transition& tr, double episode_bonus) {
    BufferEntry e{tr.state, tr.action, tr.task_reward, tr.next_state, tr.done, episode_bonus, tr.task_reward,
                  next_serial_++};
    if (data_.size() < capacity_) {
        data_.push_back(std::move(e));
    } else {
        data_[head_] = std::move(e);
        head_ = (head_ + 1) % capacity_;
    }
    return next_serial_ - 1;
}

void ReplayBuffer::add_bonus_to_last(double bonus) {
    if (data_.empty())
        throw InvalidArgument("no transition to attach a bonus to");
    at(data_.size() - 1).episode_bonus += bonus;
}

const BufferEntry& ReplayBuffer::at(std::size_t i) const {
    if (i >= data_.size())
        throw InvalidArgument("replay index out of range");
    return data_[(head_ + i) % data_.size()];
}

BufferEntry& ReplayBuffer::at(std::size_t i) {
    if (i >= data_.size())
        throw InvalidArgument("replay index out of range");
    return data_[(head_ + i) % data_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
    if (data_.empty())
        throw InvalidArgument("cannot sample from an empty buffer");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx)
        i = rng.index(data_.size());
    return idx;
}

}  // namespace mvrlab
