#include "mvrlab/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mvrlab {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty())
            out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const std::string t = trim(v);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    // Accept integral values written in float notation ("5e4").
    if (t.find_first_of(".eE") != std::string::npos) {
        const double d = parse_double(key, t);
        if (d < 0.0 || d != std::floor(d) || d > 1.8e19)
            throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
        return static_cast<std::uint64_t>(d);
    }
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return x;
}

int parse_int(const std::string& key, const std::string& v) {
    const std::uint64_t x = parse_uint(key, v);
    if (x > 1000000000ULL)
        throw ConfigError(key + ": value out of range");
    return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on")
        return true;
    if (t == "false" || t == "0" || t == "no" || t == "off")
        return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(int x) { return std::to_string(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

std::string fmt_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const auto& item : split_list(v))
        out.push_back(parse_int(key, item));
    return out;
}

Eigen::Vector2d parse_vec2(const std::string& key, const std::string& v) {
    const auto items = split_list(v);
    if (items.size() != 2)
        throw ConfigError(key + ": expected two comma-separated numbers");
    return {parse_double(key, items[0]), parse_double(key, items[1])};
}

std::string fmt_vec2(const Eigen::Vector2d& v) { return fmt(v.x()) + "," + fmt(v.y()); }

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define MVR_DOUBLE(member)                                                                                 \
    Field {                                                                                                \
        [](const RunConfig& c) { return fmt(c.member); },                                                   \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); } \
    }
#define MVR_SIZE(member)                                                                                   \
    Field {                                                                                                \
        [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.member)); },                       \
            [](RunConfig& c, const std::string& k, const std::string& v) {                                 \
                c.member = static_cast<decltype(c.member)>(parse_uint(k, v));                              \
            }                                                                                              \
    }
#define MVR_INT(member)                                                                                 \
    Field {                                                                                             \
        [](const RunConfig& c) { return fmt(c.member); },                                                \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_int(k, v); } \
    }
#define MVR_BOOL(member)                                                                                 \
    Field {                                                                                              \
        [](const RunConfig& c) { return fmt(c.member); },                                                 \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); } \
    }
#define MVR_VEC2(member)                                                                                 \
    Field {                                                                                              \
        [](const RunConfig& c) { return fmt_vec2(c.member); },                                            \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_vec2(k, v); } \
    }

template <class E>
Field enum_field(E RunConfig::*member, std::vector<std::pair<std::string, E>> names) {
    return Field{[member, names](const RunConfig& c) {
                     for (const auto& [n, e] : names)
                         if (e == c.*member)
                             return n;
                     return std::string("?");
                 },
                 [member, names](RunConfig& c, const std::string& k, const std::string& v) {
                     for (const auto& [n, e] : names)
                         if (n == trim(v)) {
                             c.*member = e;
                             return;
                         }
                     std::string allowed;
                     for (const auto& [n, e] : names)
                         allowed += (allowed.empty() ? "" : ", ") + n;
                     throw ConfigError(k + ": expected one of {" + allowed + "}, got '" + v + "'");
                 }};
}

// The one table that defines the file format. Keys are applied in this order, so
// env.name comes first and resets the environment dimensions before other env keys.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.emplace_back("env.name", Field{[](const RunConfig& c) { return c.env.name; },
                                         [](RunConfig& c, const std::string& k, const std::string& v) {
                                             try {
                                                 const EnvSpec fresh = make_env_spec(trim(v));
                                                 c.env.name = fresh.name;
                                                 c.env.state_dim = fresh.state_dim;
                                                 c.env.action_dim = fresh.action_dim;
                                             } catch (const InvalidArgument& e) {
                                                 throw ConfigError(k + ": " + e.what());
                                             }
                                         }});
        t.emplace_back("env.horizon", MVR_INT(env.horizon));
        t.emplace_back("env.sparse_task_reward", MVR_BOOL(env.sparse_task_reward));
        t.emplace_back("env.reset_noise", MVR_DOUBLE(env.reset_noise));
        t.emplace_back("cycler.phase_gain", MVR_DOUBLE(env.cycler.phase_gain));
        t.emplace_back("cycler.speed_gain", MVR_DOUBLE(env.cycler.speed_gain));
        t.emplace_back("cycler.drag", MVR_DOUBLE(env.cycler.drag));
        t.emplace_back("cycler.target_speed", MVR_DOUBLE(env.cycler.target_speed));
        t.emplace_back("cycler.success_speed_tol", MVR_DOUBLE(env.cycler.success_speed_tol));
        t.emplace_back("cycler.success_phase_rate", MVR_DOUBLE(env.cycler.success_phase_rate));
        t.emplace_back("cycler.success_window", MVR_INT(env.cycler.success_window));
        t.emplace_back("seat.accel", MVR_DOUBLE(env.seat.accel));
        t.emplace_back("seat.max_speed", MVR_DOUBLE(env.seat.max_speed));
        t.emplace_back("seat.chair_center", MVR_VEC2(env.seat.chair_center));
        t.emplace_back("seat.seat_center", MVR_VEC2(env.seat.seat_center));
        t.emplace_back("seat.seat_half_width", MVR_DOUBLE(env.seat.seat_half_width));
        t.emplace_back("seat.leg_center", MVR_VEC2(env.seat.leg_center));
        t.emplace_back("seat.leg_radius", MVR_DOUBLE(env.seat.leg_radius));
        t.emplace_back("seat.settle_speed", MVR_DOUBLE(env.seat.settle_speed));
        t.emplace_back("seat.success_window", MVR_INT(env.seat.success_window));
        t.emplace_back("seat.start", MVR_VEC2(env.seat.start));
        for (int v = 0; v < ViewId::kMaxViews; ++v)
            t.emplace_back("oracle.view_bias_" + std::to_string(v * 90),
                           Field{[v](const RunConfig& c) { return fmt(c.oracle.view_bias[v]); },
                                 [v](RunConfig& c, const std::string& k, const std::string& x) {
                                     c.oracle.view_bias[v] = parse_double(k, x);
                                 }});
        t.emplace_back("oracle.noise_std", MVR_DOUBLE(oracle.noise_std));
        t.emplace_back("oracle.embed_dim", MVR_INT(oracle.embed_dim));
        t.emplace_back("relevance.hidden", MVR_INT(relevance_hidden));
        t.emplace_back("relevance.lr_start", MVR_DOUBLE(relevance.learning_rate.start));
        t.emplace_back("relevance.lr_end", MVR_DOUBLE(relevance.learning_rate.end));
        t.emplace_back("relevance.batch_size", MVR_SIZE(relevance.batch_size));
        t.emplace_back("relevance.max_epochs", MVR_SIZE(relevance.max_epochs));
        t.emplace_back("relevance.steps_per_epoch", MVR_SIZE(relevance.steps_per_epoch));
        t.emplace_back("relevance.early_stop_patience", MVR_SIZE(relevance.early_stop_patience));
        t.emplace_back("relevance.holdout_fraction", MVR_DOUBLE(relevance.holdout_fraction));
        t.emplace_back("relevance.beta", MVR_DOUBLE(relevance.beta));
        t.emplace_back("relevance.reg_weight", MVR_DOUBLE(relevance.reg_weight));
        t.emplace_back("relevance.dataset_capacity", MVR_SIZE(dataset_capacity));
        t.emplace_back("relevance.reference_k", MVR_SIZE(reference_k));
        t.emplace_back("agent.gamma", MVR_DOUBLE(agent.gamma));
        t.emplace_back("agent.tau", MVR_DOUBLE(agent.tau));
        t.emplace_back("agent.batch_size", MVR_SIZE(agent.batch_size));
        t.emplace_back("agent.gradient_steps", MVR_SIZE(agent.gradient_steps));
        t.emplace_back("agent.update_every", MVR_SIZE(agent.update_every));
        t.emplace_back("agent.exploration_noise_std", MVR_DOUBLE(agent.exploration_noise_std));
        t.emplace_back("agent.noise_correlation", MVR_DOUBLE(agent.noise_correlation));
        t.emplace_back("agent.actor_hidden",
                       Field{[](const RunConfig& c) { return fmt_ints(c.agent.actor_hidden); },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                                 c.agent.actor_hidden = parse_ints(k, v);
                             }});
        t.emplace_back("agent.critic_hidden",
                       Field{[](const RunConfig& c) { return fmt_ints(c.agent.critic_hidden); },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                                 c.agent.critic_hidden = parse_ints(k, v);
                             }});
        t.emplace_back("agent.actor_lr", MVR_DOUBLE(agent.actor_lr));
        t.emplace_back("agent.critic_lr", MVR_DOUBLE(agent.critic_lr));
        t.emplace_back("agent.twin_critic", MVR_BOOL(agent.twin_critic));
        t.emplace_back("agent.preactivation_penalty", MVR_DOUBLE(agent.preactivation_penalty));
        t.emplace_back("agent.warmup_steps", MVR_SIZE(agent.warmup_steps));
        t.emplace_back("agent.buffer_capacity", MVR_SIZE(agent.buffer_capacity));
        t.emplace_back("shaping.w", MVR_DOUBLE(shaping.w));
        t.emplace_back("shaping.m_ref",
                       Field{[](const RunConfig& c) {
                                 return c.shaping.m_ref == 0 ? std::string("all")
                                                             : fmt(static_cast<std::uint64_t>(c.shaping.m_ref));
                             },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                                 c.shaping.m_ref = trim(v) == "all" ? 0 : parse_uint(k, v);
                             }});
        t.emplace_back("shaping.decay_window", MVR_SIZE(decay_window));
        t.emplace_back("shaping.relabel_mode",
                       enum_field(&RunConfig::relabel_mode,
                                  {{"on_sample", RelabelMode::OnSample}, {"periodic", RelabelMode::Periodic}}));
        t.emplace_back("schedule.total_steps", MVR_SIZE(schedule.total_steps));
        t.emplace_back("schedule.render_every", MVR_SIZE(schedule.render_every));
        t.emplace_back("schedule.update_every", MVR_SIZE(schedule.update_every));
        t.emplace_back("schedule.clip_length", MVR_SIZE(schedule.clip_length));
        t.emplace_back("schedule.views",
                       Field{[](const RunConfig& c) {
                                 std::vector<int> deg;
                                 for (auto v : c.views)
                                     deg.push_back(v.azimuth_degrees());
                                 return fmt_ints(deg);
                             },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                                 c.views.clear();
                                 for (int deg : parse_ints(k, v)) {
                                     if (deg % 90 != 0 || deg / 90 >= ViewId::kMaxViews)
                                         throw ConfigError(k + ": views are azimuths in {0, 90, 180, 270}");
                                     c.views.push_back(ViewId{deg / 90});
                                 }
                             }});
        t.emplace_back("schedule.view_sampling",
                       enum_field(&RunConfig::view_sampling,
                                  {{"round_robin", ViewSampling::RoundRobin}, {"random", ViewSampling::Random}}));
        t.emplace_back("schedule.window",
                       enum_field(&RunConfig::window, {{"final", WindowMode::Final}, {"random", WindowMode::Random}}));
        std::vector<std::pair<std::string, RewardVariant>> variants;
        for (auto v : all_reward_variants())
            variants.emplace_back(to_string(v), v);
        t.emplace_back("run.variant", enum_field(&RunConfig::variant, variants));
        t.emplace_back("run.seed", MVR_SIZE(seed));
        t.emplace_back("run.eval_episodes", MVR_SIZE(eval_episodes));
        t.emplace_back("run.diag_rollouts", MVR_SIZE(diag_rollouts));
        t.emplace_back("run.wall_clock", MVR_BOOL(wall_clock));
        return t;
    }();
    return table;
}

#undef MVR_DOUBLE
#undef MVR_SIZE
#undef MVR_INT
#undef MVR_BOOL
#undef MVR_VEC2

}  // namespace

std::string to_string(ViewSampling v) { return v == ViewSampling::RoundRobin ? "round_robin" : "random"; }
std::string to_string(RelabelMode m) { return m == RelabelMode::OnSample ? "on_sample" : "periodic"; }
std::string to_string(WindowMode w) { return w == WindowMode::Final ? "final" : "random"; }

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields())
        keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
}

void validate(const RunConfig& cfg) {
    try {
        validate(cfg.env);
        validate(cfg.oracle);
        validate(cfg.relevance);
        validate(cfg.agent);
        validate(cfg.shaping);
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.relevance_hidden < 1)
        throw ConfigError("relevance.hidden must be positive");
    if (cfg.agent.actor_hidden.empty() || cfg.agent.critic_hidden.empty())
        throw ConfigError("agent hidden layer lists must be non-empty");
    if (cfg.dataset_capacity == 0 || cfg.reference_k == 0)
        throw ConfigError("dataset_capacity and reference_k must be positive");
    if (cfg.schedule.total_steps == 0 || cfg.schedule.update_every == 0)
        throw ConfigError("schedule.total_steps and schedule.update_every must be positive");
    if (cfg.schedule.render_every < 1)
        throw ConfigError("schedule.render_every must be at least 1");
    if (cfg.schedule.clip_length < 2)
        throw ConfigError("schedule.clip_length must be at least 2");
    if (cfg.views.empty() || cfg.views.size() > static_cast<std::size_t>(ViewId::kMaxViews))
        throw ConfigError("schedule.views must list between one and four views");
    if (cfg.eval_episodes == 0)
        throw ConfigError("run.eval_episodes must be positive");
    if (cfg.decay_window == 0)
        throw ConfigError("shaping.decay_window must be positive");
    if (cfg.agent.batch_size > cfg.agent.buffer_capacity)
        throw ConfigError("agent.batch_size exceeds agent.buffer_capacity");
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + text + "' is not of the form section.key=value");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

RunConfig default_run_config(const std::string& env_name) {
    RunConfig c;
    try {
        c.env = make_env_spec(env_name);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig parse_config(const std::string& ini_text,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
    pt::ptree tree;
    try {
        std::istringstream in(ini_text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    std::map<std::string, std::string> values;
    for (const auto& [section, body] : tree) {
        if (body.empty())
            throw ConfigError("top-level key '" + section + "' must live in a section");
        for (const auto& [key, leaf] : body)
            values[section + "." + key] = leaf.data();
    }
    for (const auto& [k, v] : overrides)
        values[k] = v;

    const auto& table = fields();
    for (const auto& [k, v] : values) {
        const bool known = std::any_of(table.begin(), table.end(), [&](const auto& f) { return f.first == k; });
        if (!known)
            throw ConfigError("unknown config key '" + k + "'");
    }
    RunConfig cfg;
    for (const auto& [k, f] : table) {
        auto it = values.find(k);
        if (it != values.end())
            f.set(cfg, k, it->second);
    }
    cfg.env.rng_seed = cfg.seed;
    cfg.oracle.rng_seed = cfg.seed;
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string to_ini(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& [k, f] : fields()) {
        const auto dot = k.find('.');
        const std::string s = k.substr(0, dot);
        if (s != section) {
            out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
            section = s;
        }
        out << k.substr(dot + 1) << " = " << f.get(cfg) << "\n";
    }
    return out.str();
}

}  // namespace mvrlab
