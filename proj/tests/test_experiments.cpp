#include <catch2/catch.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slicesim/experiments.hpp"

using namespace slicesim;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "slicesim_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("cmd_solve writes policy, gain, and manifest") {
    auto cfg = cli::preset("small");
    cfg.out_dir = fresh_dir("solve").string();
    const auto out = cli::cmd_solve(cfg);

    CHECK(fs::exists(out.policy_path));
    CHECK(fs::exists(out.gain_path));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "manifest.json"));

    const auto states = model::enumerate_states(cfg.classes, cfg.capacity);
    const double greedy_gain =
        markov::policy_average_reward(markov::greedy_policy(states, cfg.classes, cfg.capacity), cfg.classes,
                                      cfg.capacity);
    CHECK(out.solution.gain >= greedy_gain - 1e-8);

    // the dumped policy round-trips and matches the in-memory table
    const auto loaded = cli::read_policy_csv_file(out.policy_path.string());
    for (const auto& o : states)
        for (int c = 1; c <= 3; ++c) CHECK(loaded.at(o, c) == out.solution.policy.at(o, c));
}

TEST_CASE("cmd_solve emits accept-everything when rewards are flat and capacity ample") {
    auto cfg = cli::preset("small");
    for (auto& sc : cfg.classes) sc.reward = 4.0;
    cfg.capacity = {1200, 24, 12};
    cfg.out_dir = fresh_dir("solve_flat").string();
    const auto out = cli::cmd_solve(cfg);
    for (const auto& o : model::enumerate_states(cfg.classes, cfg.capacity))
        for (int c = 1; c <= 3; ++c)
            if (model::fits(o, c, cfg.classes, cfg.capacity)) CHECK(out.solution.policy.at(o, c) == Action::Accept);
}

TEST_CASE("cmd_solve refuses state spaces beyond the exact-solver ceiling") {
    auto cfg = cli::preset("small");
    cfg.capacity = {1000000, 1000000, 1000000};
    cfg.out_dir = fresh_dir("solve_huge").string();
    CHECK_THROWS_WITH(cli::cmd_solve(cfg), Catch::Contains("state space too large"));
}

TEST_CASE("cmd_train writes per-seed curves, checkpoints, and the seed aggregate") {
    auto cfg = cli::preset("small");
    cfg.agent = agents::AgentKind::Dueling;
    cfg.train.episodes = 300;
    cfg.train.curve_interval = 50;
    cfg.seeds = {1, 2};
    cfg.out_dir = fresh_dir("train_a").string();
    const auto out = cli::cmd_train(cfg);

    REQUIRE(out.per_seed.size() == 2);
    REQUIRE(out.curve_paths.size() == 2);
    REQUIRE(out.checkpoint_paths.size() == 2);
    CHECK(fs::exists(out.mean_curve_path));
    for (const auto& p : out.curve_paths) CHECK(fs::exists(p));
    for (const auto& p : out.checkpoint_paths) {
        CHECK(fs::exists(p));
        CHECK(fs::exists(p.string() + ".manifest.json"));
    }
    const std::string curve = slurp(out.curve_paths[0]);
    CHECK(curve.rfind("episode,avg_reward,avg_reward_window,epsilon,loss\n", 0) == 0);

    SECTION("identical seeds reproduce identical bytes") {
        auto cfg2 = cfg;
        cfg2.out_dir = fresh_dir("train_b").string();
        const auto out2 = cli::cmd_train(cfg2);
        CHECK(slurp(out.curve_paths[0]) == slurp(out2.curve_paths[0]));
        CHECK(slurp(out.curve_paths[1]) == slurp(out2.curve_paths[1]));
        CHECK(slurp(out.checkpoint_paths[0]) == slurp(out2.checkpoint_paths[0]));
        CHECK(slurp(out.mean_curve_path) == slurp(out2.mean_curve_path));
    }
}

TEST_CASE("cmd_simulate evaluates built-ins, policy files, and checkpoints") {
    auto cfg = cli::preset("small");
    cfg.horizon = 50000;
    cfg.trajectory_limit = 100;
    cfg.seeds = {9};

    SECTION("all-reject earns zero") {
        cfg.out_dir = fresh_dir("sim_reject").string();
        const auto out = cli::cmd_simulate(cfg, cli::BuiltinReject{});
        CHECK(out.metrics.average_reward() == 0.0);
        CHECK(fs::exists(out.metrics_path));
        const std::string traj = slurp(out.trajectory_path);
        CHECK(std::count(traj.begin(), traj.end(), '\n') == 101);  // header + capped rows
    }

    SECTION("the emitted optimal policy reproduces the solved gain and beats greedy") {
        auto solve_cfg = cfg;
        solve_cfg.out_dir = fresh_dir("sim_solve").string();
        const auto solved = cli::cmd_solve(solve_cfg);

        cfg.horizon = 10000000;
        cfg.out_dir = fresh_dir("sim_optimal").string();
        const auto optimal = cli::cmd_simulate(cfg, cli::PolicyFile{solved.policy_path.string()});
        cfg.out_dir = fresh_dir("sim_greedy").string();
        const auto greedy = cli::cmd_simulate(cfg, cli::BuiltinGreedy{});
        CHECK(optimal.metrics.average_reward() == Approx(solved.solution.gain).epsilon(0.01));
        CHECK(optimal.metrics.average_reward() >= greedy.metrics.average_reward());
    }

    SECTION("a truncated policy file is rejected") {
        const fs::path dir = fresh_dir("sim_badpolicy");
        const fs::path policy = dir / "partial.csv";
        std::ofstream os(policy);
        os << "state,class_id,action\n0-0-0,1,accept\n";
        os.close();
        cfg.out_dir = (dir / "out").string();
        CHECK_THROWS_WITH(cli::cmd_simulate(cfg, cli::PolicyFile{policy.string()}),
                          Catch::Contains("policy file misses"));
    }

    SECTION("checkpoints run and manifests are verified") {
        auto train_cfg = cli::preset("small");
        train_cfg.agent = agents::AgentKind::Dueling;
        train_cfg.train.episodes = 200;
        train_cfg.seeds = {3};
        train_cfg.out_dir = fresh_dir("sim_ck_train").string();
        const auto trained = cli::cmd_train(train_cfg);
        REQUIRE(trained.checkpoint_paths.size() == 1);
        const std::string ck = trained.checkpoint_paths[0].string();

        cfg.out_dir = fresh_dir("sim_ck_eval").string();
        const auto out = cli::cmd_simulate(cfg, cli::CheckpointFile{ck});
        CHECK(out.metrics.epochs == cfg.horizon);

        // doctor the manifest: class count mismatch must be caught
        {
            std::ofstream ms(ck + ".manifest.json");
            ms << R"({"agent":"dueling","classes":2,"features":"onehot","seed":3})" << '\n';
        }
        CHECK_THROWS_WITH(cli::cmd_simulate(cfg, cli::CheckpointFile{ck}),
                          Catch::Contains("checkpoint/manifest mismatch"));
    }
}

TEST_CASE("cmd_sweep_reward emits reward-independent greedy counts") {
    auto cfg = cli::preset("small");
    cfg.train.episodes = 60;          // keep the learners cheap; greedy is the focus here
    cfg.train.curve_interval = 20;
    cfg.horizon = 30000;
    cfg.seeds = {5};
    cfg.out_dir = fresh_dir("sweep").string();

    const double r3s[] = {1.0, 6.0};
    const auto out = cli::cmd_sweep_reward(cfg, r3s);
    CHECK(fs::exists(out.summary_path));
    REQUIRE(out.cells.size() == 6);  // 2 reward values x 3 agents

    const fs::path dir = cfg.out_dir;
    const std::string greedy_r1 = slurp(dir / "counts_greedy_r3_1.csv");
    const std::string greedy_r6 = slurp(dir / "counts_greedy_r3_6.csv");
    CHECK(greedy_r1 == greedy_r6);
    CHECK(greedy_r1.rfind("class_id,mean_running_slices,offered,accepted\n", 0) == 0);

    // greedy's reward grows with r3 on the identical trajectory
    double greedy_at_1 = -1, greedy_at_6 = -1;
    for (const auto& cell : out.cells)
        if (cell.agent == agents::AgentKind::Greedy) {
            if (cell.r3 == 1.0) greedy_at_1 = cell.avg_reward;
            if (cell.r3 == 6.0) greedy_at_6 = cell.avg_reward;
        }
    CHECK(greedy_at_6 > greedy_at_1);

    CHECK(fs::exists(dir / "profile_greedy_r3_1.csv"));
    CHECK(fs::exists(dir / "profile_dueling_r3_6.csv"));
    CHECK(fs::exists(dir / "counts_tabular_r3_1.csv"));
}

TEST_CASE("reruns with the same manifest reproduce outputs byte for byte") {
    auto cfg = cli::preset("small");
    cfg.out_dir = fresh_dir("repro_a").string();
    cli::cmd_solve(cfg);
    auto cfg2 = cfg;
    cfg2.out_dir = fresh_dir("repro_b").string();
    cli::cmd_solve(cfg2);

    for (const char* name : {"policy.csv", "gain.json"})
        CHECK(slurp(fs::path(cfg.out_dir) / name) == slurp(fs::path(cfg2.out_dir) / name));

    // manifests differ only through the configured output directory
    const std::string m1 = slurp(fs::path(cfg.out_dir) / "manifest.json");
    CHECK(m1.find(cli::config_hash(cfg)) != std::string::npos);
    CHECK(m1.find("\"command\": \"solve\"") != std::string::npos);
}
