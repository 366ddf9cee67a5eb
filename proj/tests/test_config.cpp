#include <catch2/catch.hpp>

#include "slicesim/config.hpp"
#include "slicesim/model.hpp"

using namespace slicesim;

TEST_CASE("presets carry the published experiment parameters") {
    const auto small = cli::preset("small");
    REQUIRE(small.classes.size() == 3);
    CHECK(small.capacity.radio == 400);
    CHECK(small.capacity.compute == 8);
    CHECK(small.capacity.storage == 4);
    CHECK(small.classes[0].arrival_rate == 12.0);
    CHECK(small.classes[1].arrival_rate == 8.0);
    CHECK(small.classes[2].arrival_rate == 10.0);
    for (const auto& sc : small.classes) {
        CHECK(sc.completion_rate == 3.0);
        CHECK(sc.radio_demand == 100);
        CHECK(sc.compute_demand == 2);
        CHECK(sc.storage_demand == 1);
    }
    CHECK(small.classes[0].reward == 1.0);
    CHECK(small.classes[1].reward == 2.0);
    CHECK(small.classes[2].reward == 4.0);
    CHECK(model::enumerate_states(small.classes, small.capacity).size() == 35);

    const auto medium = cli::preset("medium");
    CHECK(medium.capacity.radio == 1000);
    CHECK(medium.capacity.compute == 20);
    CHECK(medium.capacity.storage == 10);
    CHECK(medium.classes[0].arrival_rate == 48.0);
    CHECK(medium.classes[1].arrival_rate == 32.0);
    CHECK(medium.classes[2].arrival_rate == 40.0);
    for (const auto& sc : medium.classes) CHECK(sc.completion_rate == 2.0);

    const auto large = cli::preset("large");
    CHECK(large.capacity.radio == 2000);
    CHECK(large.capacity.compute == 40);
    CHECK(large.capacity.storage == 20);
    CHECK(large.classes[0].arrival_rate == 48.0);

    CHECK_THROWS_AS(cli::preset("galactic"), ConfigError);
}

TEST_CASE("config dump and parse round-trip") {
    auto cfg = cli::preset("small");
    cfg.agent = agents::AgentKind::DoubleQ;
    cfg.train.episodes = 1234;
    cfg.train.learning_rate = 0.005;
    cfg.seeds = {4, 8, 15};
    cfg.mode = sim::Mode::Continuous;
    cfg.out_dir = "results/run1";

    const std::string text = cli::dump_config(cfg);
    const auto parsed = cli::parse_config(text);
    CHECK(cli::dump_config(parsed) == text);
    CHECK(parsed.agent == agents::AgentKind::DoubleQ);
    CHECK(parsed.train.episodes == 1234);
    CHECK(parsed.seeds == std::vector<std::uint64_t>{4, 8, 15});
    CHECK(parsed.mode == sim::Mode::Continuous);
}

TEST_CASE("config parsing handles comments and rejects malformed input") {
    const auto base = cli::dump_config(cli::preset("small"));

    SECTION("comments and blank lines are ignored") {
        const auto parsed = cli::parse_config("# leading comment\n\n" + base + "\n  # trailing\n");
        CHECK(cli::dump_config(parsed) == base);
    }

    SECTION("unknown keys are rejected") {
        CHECK_THROWS_WITH(cli::parse_config(base + "experiment.flux_capacitor = 1\n"),
                          Catch::Contains("unknown key"));
    }

    SECTION("missing equals sign") {
        CHECK_THROWS_WITH(cli::parse_config(base + "train.gamma 0.5\n"), Catch::Contains("missing '='"));
    }

    SECTION("non-numeric values") {
        CHECK_THROWS_AS(cli::parse_config(base + "train.gamma = high\n"), ConfigError);
    }

    SECTION("class count mismatch") {
        std::string text = base;
        const auto pos = text.find("experiment.classes = 3");
        text.replace(pos, 22, "experiment.classes = 4");
        CHECK_THROWS_WITH(cli::parse_config(text), Catch::Contains("classes"));
    }

    SECTION("model invariants are enforced before any run") {
        std::string text = base;
        const auto pos = text.find("capacity.radio = 400");
        text.replace(pos, 20, "capacity.radio = 0");
        CHECK_THROWS_AS(cli::parse_config(text), ConfigError);

        std::string text2 = base;
        const auto pos2 = text2.find("class1.arrival_rate = 12");
        text2.replace(pos2, 24, "class1.arrival_rate = -1");
        CHECK_THROWS_AS(cli::parse_config(text2), ConfigError);
    }
}

TEST_CASE("config hash tracks content") {
    const auto a = cli::preset("small");
    auto b = cli::preset("small");
    CHECK(cli::config_hash(a) == cli::config_hash(b));
    b.train.gamma = 0.95;
    CHECK(cli::config_hash(a) != cli::config_hash(b));
}
