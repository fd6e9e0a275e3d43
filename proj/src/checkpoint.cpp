#include "mvrlab/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mvrlab {

namespace {

constexpr const char* kMagic = "mvrlab-checkpoint";
constexpr int kVersion = 1;

std::string fmt(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

void write_values(std::ostream& out, std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        out << (i ? " " : "") << fmt(v[i]);
    out << "\n";
}

void write_ints(std::ostream& out, const std::vector<int>& v) {
    out << v.size();
    for (int x : v)
        out << " " << x;
    out << "\n";
}

class Reader {
  public:
    explicit Reader(std::istream& in) : in_(in) {}

    void expect(const std::string& word) {
        const std::string got = token();
        if (got != word)
            throw InvalidArgument("checkpoint: expected '" + word + "', found '" + got + "'");
    }

    std::string token() {
        std::string t;
        if (!(in_ >> t))
            throw InvalidArgument("checkpoint: unexpected end of file");
        return t;
    }

    double real() {
        const std::string t = token();
        double x = 0.0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
        if (ec != std::errc() || p != t.data() + t.size())
            throw InvalidArgument("checkpoint: bad number '" + t + "'");
        return x;
    }

    std::uint64_t count() {
        const std::string t = token();
        std::uint64_t x = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
        if (ec != std::errc() || p != t.data() + t.size())
            throw InvalidArgument("checkpoint: bad count '" + t + "'");
        return x;
    }

    std::int64_t integer() {
        const std::string t = token();
        std::int64_t x = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
        if (ec != std::errc() || p != t.data() + t.size())
            throw InvalidArgument("checkpoint: bad integer '" + t + "'");
        return x;
    }

    std::vector<double> reals(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v)
            x = real();
        return v;
    }

    std::vector<int> ints() {
        std::vector<int> v(count());
        for (auto& x : v)
            x = static_cast<int>(integer());
        return v;
    }

  private:
    std::istream& in_;
};

}  // namespace

Mlp restore_mlp(const std::vector<int>& sizes, const std::vector<double>& params) {
    if (sizes.size() < 2)
        throw InvalidArgument("network needs at least an input and an output layer");
    for (int s : sizes)
        if (s < 1)
            throw InvalidArgument("network layer sizes must be positive");
    Rng rng(0);
    Mlp net(sizes, rng);
    net.set_flat(params);
    return net;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
    out << kMagic << " " << kVersion << "\n";
    out << "env " << ck.env_name << "\n";
    out << "seed " << ck.seed << "\n";
    out << "variant " << to_string(ck.variant) << "\n";
    out << "model_ready " << (ck.model_ready ? 1 : 0) << "\n";
    const auto rel = ck.model.flat();
    out << "relevance " << ck.model.state_dim() << " " << ck.model.hidden() << " " << ck.model.W2.rows() << " "
        << rel.size() << "\n";
    write_values(out, rel);
    out << "actor ";
    write_ints(out, ck.actor_sizes);
    out << ck.actor_params.size() << "\n";
    write_values(out, ck.actor_params);
    out << "critic ";
    write_ints(out, ck.critic_sizes);
    out << ck.critic_params.size() << "\n";
    write_values(out, ck.critic_params);
    out << "reference " << ck.reference.k() << " " << ck.reference.size() << "\n";
    for (const auto& e : ck.reference.entries()) {
        const auto [start, end] = e.sequence.step_range();
        out << "entry " << e.sequence.episode_id() << " " << start << " " << fmt(e.score) << " " << e.sequence.length()
            << " " << e.sequence.state_dim() << "\n";
        for (const auto& s : e.sequence.states())
            write_values(out, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
    }
    out << "r_vlm_history " << ck.r_vlm_history.size() << "\n";
    write_values(out, ck.r_vlm_history);
    out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
    Reader r(in);
    Checkpoint ck;
    r.expect(kMagic);
    if (r.integer() != kVersion)
        throw InvalidArgument("checkpoint: unsupported version");
    r.expect("env");
    ck.env_name = r.token();
    r.expect("seed");
    ck.seed = r.count();
    r.expect("variant");
    ck.variant = parse_reward_variant(r.token());
    r.expect("model_ready");
    ck.model_ready = r.integer() != 0;

    r.expect("relevance");
    const auto state_dim = static_cast<int>(r.count());
    const auto hidden = static_cast<int>(r.count());
    const auto embed = static_cast<int>(r.count());
    const std::size_t n_rel = r.count();
    if (state_dim < 1 || hidden < 1 || embed < 1)
        throw InvalidArgument("checkpoint: bad relevance dimensions");
    ck.model = RelevanceModel::init(state_dim, hidden, 0);
    if (ck.model.W2.rows() != embed || ck.model.num_params() != n_rel)
        throw InvalidArgument("checkpoint: relevance parameter count mismatch");
    ck.model.set_flat(r.reals(n_rel));

    r.expect("actor");
    ck.actor_sizes = r.ints();
    ck.actor_params = r.reals(r.count());
    r.expect("critic");
    ck.critic_sizes = r.ints();
    ck.critic_params = r.reals(r.count());

    r.expect("reference");
    const std::size_t k = r.count();
    const std::size_t n_entries = r.count();
    if (k == 0)
        throw InvalidArgument("checkpoint: reference k must be positive");
    ck.reference = ReferenceSet(k);
    for (std::size_t i = 0; i < n_entries; ++i) {
        r.expect("entry");
        const std::int64_t episode = r.integer();
        const std::size_t start = r.count();
        const double score = r.real();
        const std::size_t len = r.count();
        const std::size_t dim = r.count();
        std::vector<StateVec> states;
        for (std::size_t t = 0; t < len; ++t) {
            const auto v = r.reals(dim);
            states.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(dim)));
        }
        // Entries are stored best first, so re-offering in order preserves the ranking.
        ck.reference.offer(StateSequence(std::move(states), episode, start), score);
    }
    r.expect("r_vlm_history");
    ck.r_vlm_history = r.reals(r.count());
    r.expect("end");
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path);
    if (!out)
        throw InvalidArgument("cannot write checkpoint '" + path + "'");
    write_checkpoint(out, ck);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot read checkpoint '" + path + "'");
    return read_checkpoint(in);
}

}  // namespace mvrlab
