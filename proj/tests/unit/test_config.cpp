#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvrlab/config.hpp"

#include <algorithm>

using namespace mvrlab;

TEST_CASE("documented defaults") {
    const RunConfig c = parse_config("");
    CHECK(c.env.name == "seat");
    CHECK(c.schedule.total_steps == 50000);
    CHECK(c.schedule.clip_length == 16);
    CHECK(c.agent.gamma == 0.99);
    CHECK(c.shaping.w == 0.1);
    CHECK(c.shaping.m_ref == 64);
    CHECK(c.reference_k == 10);
    CHECK(c.dataset_capacity == 20000);
    CHECK(c.views.size() == 4);
    CHECK(c.variant == RewardVariant::Mvr);
    CHECK_FALSE(c.wall_clock);
}

TEST_CASE("sections and keys") {
    const RunConfig c = parse_config(R"(
; comment
[env]
name = cycler
[shaping]
w = 0.5
m_ref = all
[schedule]
views = 0, 180
total_steps = 5e3
[agent]
actor_hidden = 32,32,32
[run]
variant = image_sim
seed = 4
)");
    CHECK(c.env.name == "cycler");
    CHECK(c.env.state_dim == 3);
    CHECK(c.shaping.w == 0.5);
    CHECK(c.shaping.m_ref == 0);
    REQUIRE(c.views.size() == 2);
    CHECK(c.views[1] == ViewId{2});
    CHECK(c.schedule.total_steps == 5000);
    CHECK(c.agent.actor_hidden == std::vector<int>{32, 32, 32});
    CHECK(c.variant == RewardVariant::ImageSim);
    CHECK(c.seed == 4);
}

TEST_CASE("overrides win over the file") {
    const RunConfig c = parse_config("[shaping]\nw = 0.5\n", {parse_override("shaping.w=0.01"), parse_override(" run.seed = 3 ")});
    CHECK(c.shaping.w == 0.01);
    CHECK(c.seed == 3);
    CHECK_THROWS_AS(parse_override("shaping.w"), ConfigError);
    CHECK_THROWS_AS(parse_override("=1"), ConfigError);
    CHECK_THROWS_AS(parse_config("", {{"shaping.nope", "1"}}), ConfigError);
}

TEST_CASE("errors are config errors") {
    CHECK_THROWS_AS(parse_config("[shaping]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[shaping]\nw = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[shaping]\nw = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[env]\nname = walker\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[schedule]\nviews = 45\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[schedule]\nviews =\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[agent]\ngamma = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[run]\nvariant = best\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[run]\nseed = -2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[run]\nseed = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[run\nseed = 1\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/mvrlab.ini"), ConfigError);
}

TEST_CASE("resolved config round-trips") {
    RunConfig c = default_run_config("cycler");
    c.shaping.w = 0.37;
    c.relevance.beta = 1.0 / 3.0;
    c.views = {ViewId{3}, ViewId{1}};
    c.agent.critic_hidden = {8};
    c.relabel_mode = RelabelMode::Periodic;
    const std::string ini = to_ini(c);
    const RunConfig back = parse_config(ini);
    CHECK(to_ini(back) == ini);
    CHECK(back.relevance.beta == c.relevance.beta);
    CHECK(back.views.size() == 2);
    for (const auto& k : config_keys())
        CHECK(ini.find(k.substr(k.find('.') + 1) + " = ") != std::string::npos);
}

TEST_CASE("shipped configs load") {
    for (const char* path : {"configs/cycler.ini", "configs/seat.ini"}) {
        const RunConfig c = load_config(std::string(MVRLAB_SOURCE_DIR) + "/" + path);
        CHECK(c.relevance.beta == 10);
        CHECK(c.agent.gamma == 0.9);
    }
}

TEST_CASE("key list is sorted and unique") {
    const auto k = config_keys();
    CHECK(std::is_sorted(k.begin(), k.end()));
    CHECK(std::adjacent_find(k.begin(), k.end()) == k.end());
    CHECK(std::find(k.begin(), k.end(), "shaping.w") != k.end());
}
