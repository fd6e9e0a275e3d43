#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mvrlab {

using StateVec = Eigen::VectorXd;

/// Raised when a caller violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Camera azimuth index: 0, 1, 2, 3 map to 0, 90, 180, 270 degrees.
struct ViewId {
    int index = 0;

    static constexpr int kMaxViews = 4;

    constexpr int azimuth_degrees() const { return index * 90; }
    friend constexpr bool operator==(ViewId a, ViewId b) { return a.index == b.index; }
};

ViewId make_view(int index, int num_views = ViewId::kMaxViews);

/// An ordered run of environment states taken from one episode.
class StateSequence {
  public:
    StateSequence() = default;
    StateSequence(std::vector<StateVec> states, std::int64_t episode_id = 0, std::size_t start = 0);

    std::size_t length() const { return states_.size(); }
    int state_dim() const { return states_.empty() ? 0 : static_cast<int>(states_.front().size()); }
    const StateVec& operator[](std::size_t i) const { return states_[i]; }
    const std::vector<StateVec>& states() const { return states_; }
    std::int64_t episode_id() const { return episode_id_; }
    std::pair<std::size_t, std::size_t> step_range() const { return {start_, start_ + states_.size()}; }

    /// Copy of states [begin, end) keeping episode provenance.
    StateSequence slice(std::size_t begin, std::size_t end) const;

    /// States as columns of a (state_dim x length) matrix.
    Eigen::MatrixXd as_matrix() const;

  private:
    std::vector<StateVec> states_;
    std::int64_t episode_id_ = 0;
    std::size_t start_ = 0;
};

/// n(s): number of states in the sequence.
std::size_t sequence_mean_length(const StateSequence& seq);

struct RenderedClip {
    std::vector<Eigen::VectorXd> frames;
    ViewId view;
    StateSequence source;

    std::size_t length() const { return frames.size(); }
    int frame_dim() const { return frames.empty() ? 0 : static_cast<int>(frames.front().size()); }
};

struct TaskPrompt {
    std::string text;
};

/// One element of the comparison dataset: (state sequence, clip embedding, text score).
struct SimilaritySample {
    StateSequence sequence;
    Eigen::VectorXd clip_embedding;
    double text_score = 0.0;
    ViewId view;
    /// Per-frame single-image scores, kept for the image-similarity baseline.
    std::vector<double> frame_scores;

    /// Throws InvalidArgument if the embedding is not unit length or the score leaves [0, 1].
    void validate() const;
};

/// FIFO-bounded collection of SimilaritySample.
class RewardDataset {
  public:
    static constexpr std::size_t kDefaultCapacity = 20000;

    explicit RewardDataset(std::size_t capacity = kDefaultCapacity);

    void append(SimilaritySample sample);

    std::size_t size() const { return samples_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return samples_.empty(); }
    const SimilaritySample& operator[](std::size_t i) const { return samples_[i]; }
    auto begin() const { return samples_.begin(); }
    auto end() const { return samples_.end(); }

  private:
    std::size_t capacity_;
    std::deque<SimilaritySample> samples_;
};

RewardDataset dataset_append(RewardDataset d, SimilaritySample x);

/// Top-k state sequences by text score. A sequence offered more than once keeps its best
/// score; ties go to the sequence offered first.
class ReferenceSet {
  public:
    static constexpr std::size_t kDefaultK = 10;

    struct Entry {
        StateSequence sequence;
        double score = 0.0;
        std::uint64_t arrival = 0;
    };

    explicit ReferenceSet(std::size_t k = kDefaultK);

    /// Returns true if the sequence is among the retained entries afterwards.
    bool offer(const StateSequence& seq, double score);

    std::size_t k() const { return k_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    /// Entries ordered best first.
    const std::vector<Entry>& entries() const { return entries_; }
    /// Total number of states over all retained sequences.
    std::size_t state_count() const;
    /// Bumped on every change to the retained entries.
    std::uint64_t version() const { return version_; }

  private:
    using Key = std::pair<std::int64_t, std::size_t>;
    struct Seen {
        double best = 0.0;
        std::uint64_t arrival = 0;
    };

    static bool ranks_before(double score_a, std::uint64_t arrival_a, double score_b,
                             std::uint64_t arrival_b);

    std::size_t k_;
    std::vector<Entry> entries_;
    std::map<Key, Seen> history_;
    std::uint64_t next_arrival_ = 0;
    std::uint64_t version_ = 0;
};

ReferenceSet refset_offer(ReferenceSet r, const StateSequence& seq, double score);

}  // namespace mvrlab
