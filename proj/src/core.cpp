#include "mvrlab/core.hpp"

#include <algorithm>
#include <cmath>

namespace mvrlab {

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.allFinite(); }

ViewId make_view(int index, int num_views) {
    if (index < 0 || index >= num_views || num_views > ViewId::kMaxViews)
        throw InvalidArgument("view index " + std::to_string(index) + " out of range");
    return ViewId{index};
}

StateSequence::StateSequence(std::vector<StateVec> states, std::int64_t episode_id, std::size_t start)
    : states_(std::move(states)), episode_id_(episode_id), start_(start) {
    if (states_.empty())
        throw InvalidArgument("state sequence must be non-empty");
    const auto dim = states_.front().size();
    for (const auto& s : states_) {
        if (s.size() != dim)
            throw InvalidArgument("state sequence mixes state dimensions");
        if (!s.allFinite())
            throw InvalidArgument("state sequence contains non-finite values");
    }
}

StateSequence StateSequence::slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > states_.size())
        throw InvalidArgument("bad slice range");
    std::vector<StateVec> part(states_.begin() + static_cast<std::ptrdiff_t>(begin),
                               states_.begin() + static_cast<std::ptrdiff_t>(end));
    return StateSequence(std::move(part), episode_id_, start_ + begin);
}

Eigen::MatrixXd StateSequence::as_matrix() const {
    Eigen::MatrixXd m(state_dim(), static_cast<Eigen::Index>(states_.size()));
    for (std::size_t t = 0; t < states_.size(); ++t)
        m.col(static_cast<Eigen::Index>(t)) = states_[t];
    return m;
}

std::size_t sequence_mean_length(const StateSequence& seq) { return seq.length(); }

void SimilaritySample::validate() const {
    if (!clip_embedding.allFinite() || !std::isfinite(text_score))
        throw InvalidArgument("similarity sample has non-finite embedding or score");
    if (std::abs(clip_embedding.norm() - 1.0) > 1e-9)
        throw InvalidArgument("clip embedding must have unit norm");
    if (text_score < 0.0 || text_score > 1.0)
        throw InvalidArgument("text score outside [0, 1]");
    if (sequence.length() == 0)
        throw InvalidArgument("similarity sample without states");
}

RewardDataset::RewardDataset(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0)
        throw InvalidArgument("dataset capacity must be positive");
}

void RewardDataset::append(SimilaritySample sample) {
    sample.validate();
    samples_.push_back(std::move(sample));
    while (samples_.size() > capacity_)
        samples_.pop_front();
}

RewardDataset dataset_append(RewardDataset d, SimilaritySample x) {
    d.append(std::move(x));
    return d;
}

ReferenceSet::ReferenceSet(std::size_t k) : k_(k) {
    if (k_ == 0)
        throw InvalidArgument("reference set needs k >= 1");
}

bool ReferenceSet::ranks_before(double score_a, std::uint64_t arrival_a, double score_b,
                                std::uint64_t arrival_b) {
    if (score_a != score_b)
        return score_a > score_b;
    return arrival_a < arrival_b;
}

bool ReferenceSet::offer(const StateSequence& seq, double score) {
    if (!std::isfinite(score))
        throw InvalidArgument("reference score must be finite");

    const Key key{seq.episode_id(), seq.step_range().first};
    auto [it, inserted] = history_.try_emplace(key, Seen{score, next_arrival_});
    if (inserted)
        ++next_arrival_;
    else
        it->second.best = std::max(it->second.best, score);
    const Seen seen = it->second;

    auto present = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
        return e.sequence.episode_id() == key.first && e.sequence.step_range().first == key.second;
    });
    const auto by_rank = [](const Entry& a, const Entry& b) {
        return ranks_before(a.score, a.arrival, b.score, b.arrival);
    };

    if (present != entries_.end()) {
        if (seen.best != present->score) {
            present->score = seen.best;
            std::sort(entries_.begin(), entries_.end(), by_rank);
            ++version_;
        }
        return true;
    }

    if (entries_.size() == k_) {
        const Entry& worst = entries_.back();
        if (!ranks_before(seen.best, seen.arrival, worst.score, worst.arrival))
            return false;
        entries_.pop_back();
    }
    Entry e{seq, seen.best, seen.arrival};
    entries_.insert(std::upper_bound(entries_.begin(), entries_.end(), e, by_rank), std::move(e));
    ++version_;
    return true;
}

std::size_t ReferenceSet::state_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        n += e.sequence.length();
    return n;
}

ReferenceSet refset_offer(ReferenceSet r, const StateSequence& seq, double score) {
    r.offer(seq, score);
    return r;
}

}  // namespace mvrlab
