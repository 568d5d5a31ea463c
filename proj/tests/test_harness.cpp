#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "suav/harness.hpp"

using namespace suav;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("suav_test_" + name)).string();
}

Environment desk_env(int n_sns = 3) {
  ExperimentConfig c;
  c.layout.n_sns = n_sns;
  return Environment(build_task(c), c.scenario);
}

// Places the UAV next to SN `near` with the given buffers and ages.
EnvState crafted_state(const Environment& env, std::vector<int> aoi,
                       std::vector<std::optional<int>> sn, std::size_t near) {
  EnvState s = env.reset();
  s.freshness.aoi = std::move(aoi);
  s.freshness.sn_lifetime = std::move(sn);
  s.uav.position = env.task().layout.sn_positions[near];
  s.slot = 5;
  return s;
}

}  // namespace

TEST_CASE("config round trip and validation") {
  const ExperimentConfig def;
  CHECK(def.scenario.horizon == 50);
  CHECK(def.layout.n_sns == 3);
  CHECK(def.episodes == 2000);

  const json j = to_json(def);
  const ExperimentConfig back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.scenario.channel.snr_threshold == doctest::Approx(1.5848931924611136).epsilon(1e-14));
  CHECK(back.scenario.channel.noise_power == doctest::Approx(1e-13).epsilon(1e-12));
  CHECK(back.scenario.channel.beta0 == doctest::Approx(1e-6).epsilon(1e-12));

  json bad = j;
  bad["scenario"]["bogus"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["scenario"]["horizon"] = "fifty";
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["adapt_mode"] = "sideways";
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["trust"]["max_kl"] = -1.0;
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
}

TEST_CASE("overrides and hashing") {
  json j = to_json(ExperimentConfig{});
  apply_override(j, "scenario.horizon=100");
  apply_override(j, "scenario.channel.snr_threshold_db=3");
  apply_override(j, "policy=random");
  apply_override(j, "eval_greedy=false");
  apply_override(j, "sweep.n_sns=[2,4,6]");
  const ExperimentConfig c = config_from_json(j);
  CHECK(c.scenario.horizon == 100);
  CHECK(c.scenario.channel.snr_threshold == doctest::Approx(std::pow(10.0, 0.3)));
  CHECK(c.policy == "random");
  CHECK_FALSE(c.eval_greedy);
  CHECK(c.sweep.n_sns == std::vector<int>{2, 4, 6});

  CHECK_THROWS_AS(apply_override(j, "noequals"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(j, "nosuch.key=1"), std::invalid_argument);
  json typo = j;
  apply_override(typo, "scenario.horizn=3");
  CHECK_THROWS_AS(config_from_json(typo), std::invalid_argument);

  const json a = to_json(ExperimentConfig{});
  json b = a;
  CHECK(config_hash(a) == config_hash(b));
  apply_override(b, "layout.seed=8");
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("layouts") {
  LayoutConfig l;
  l.n_sns = 4;
  const NodeLayout four = build_layout(l);
  l.n_sns = 2;
  const NodeLayout two = build_layout(l);
  REQUIRE(four.size() == 4);
  CHECK(two.sn_positions[0] == four.sn_positions[0]);
  CHECK(two.sn_positions[1] == four.sn_positions[1]);
  for (const Vec2& p : four.sn_positions) {
    CHECK(p.x >= 0.0);
    CHECK(p.x <= 200.0);
    CHECK(p.y >= 0.0);
    CHECK(p.y <= 200.0);
  }
  l.positions = {{10.0, 20.0}, {30.0, 40.0}};
  CHECK(build_layout(l).sn_positions == l.positions);
  l.positions = {{-5.0, 20.0}};
  CHECK_THROWS(build_layout(l));
}

TEST_CASE("AoI-greedy baseline") {
  const Environment env = desk_env(2);

  SUBCASE("empty SN buffers: no schedule, offload iff the UAV holds data") {
    EnvState s = crafted_state(env, {4, 7}, {std::nullopt, std::nullopt}, 0);
    CompoundAction a = aoi_greedy_action(env, s);
    CHECK(a.schedule == 0);
    CHECK_FALSE(a.offload);
    CHECK(a.speed_next == 0.0);
    s.freshness.uav_lifetime[1] = 2;
    a = aoi_greedy_action(env, s);
    CHECK(a.schedule == 0);
    CHECK(a.offload);
  }

  SUBCASE("largest AoI wins") {
    const EnvState s = crafted_state(env, {9, 3}, {1, 1}, 0);
    const CompoundAction a = aoi_greedy_action(env, s);
    CHECK(a.schedule == 1);
    CHECK(a.offload);
    CHECK(a.speed_next == env.params().kinematics.max_speed);
  }

  SUBCASE("ties go to the lowest index") {
    const EnvState s = crafted_state(env, {5, 5}, {2, 0}, 1);
    CHECK(aoi_greedy_action(env, s).schedule == 1);
  }

  SUBCASE("an SN without a packet is never targeted") {
    const EnvState s = crafted_state(env, {9, 3}, {std::nullopt, 0}, 1);
    CHECK(aoi_greedy_action(env, s).schedule == 2);
  }

  SUBCASE("turn toward the target is clamped") {
    EnvState s = crafted_state(env, {9, 3}, {1, 1}, 0);
    const Vec2 target = env.task().layout.sn_positions[0];
    s.uav.position = target + Vec2{50.0, 0.0};  // target due west, bearing pi
    s.uav.heading = 0.0;
    const CompoundAction a = aoi_greedy_action(env, s);
    const double turn = std::abs(heading_difference(0.0, a.heading));
    CHECK(turn == doctest::Approx(env.params().kinematics.max_turn));
  }
}

TEST_CASE("random baseline") {
  const Environment env = desk_env(3);
  const EnvState s0 = env.reset();
  Rng a(4), b(4);
  for (int i = 0; i < 20; ++i) {
    const CompoundAction x = random_action(env, s0, a);
    const CompoundAction y = random_action(env, s0, b);
    CHECK(x.schedule == y.schedule);
    CHECK(x.speed_next == y.speed_next);
  }

  // Frequencies over 2(N + 1) = 8 discrete actions, each within 3 standard errors.
  Rng rng(5);
  const int draws = 80000;
  std::vector<int> counts(8, 0);
  EnvState s = s0;
  s.slot = 3;
  s.uav.heading = 1.0;
  const auto& k = env.params().kinematics;
  for (int i = 0; i < draws; ++i) {
    const CompoundAction act = random_action(env, s, rng);
    ++counts[encode_discrete(act.schedule, act.offload, 3)];
    REQUIRE(act.speed_next >= 0.0);
    REQUIRE(act.speed_next <= k.max_speed);
    REQUIRE(std::abs(heading_difference(s.uav.heading, act.heading)) <= k.max_turn + 1e-12);
  }
  const double p = 1.0 / 8.0;
  const double se = std::sqrt(draws * p * (1.0 - p));
  for (int c : counts) CHECK(std::abs(c - draws * p) <= 3.0 * se);
}

TEST_CASE("evaluation") {
  const Environment env = desk_env(3);

  CHECK_THROWS_AS(run_eval(env, random_policy(), 0, 1), std::invalid_argument);

  const EvalReport a = run_eval(env, random_policy(), 5, 17);
  const EvalReport b = run_eval(env, random_policy(), 5, 17);
  CHECK(a.mean_cost == b.mean_cost);
  CHECK(a.mean_aoi == b.mean_aoi);
  CHECK(a.mean_energy == b.mean_energy);
  CHECK(a.cost_half_width == b.cost_half_width);

  // Re-aggregate the raw per-slot log.
  std::vector<EpisodeStats> raw(8);
  const auto& p = env.params();
  const auto sink = [&](int e, int, const EnvState&, const CompoundAction&, const StepOutcome& o) {
    EpisodeStats& st = raw[static_cast<std::size_t>(e - 1)];
    double sum = 0.0;
    for (int d : o.next_state.freshness.aoi) sum += d;
    st.avg_aoi += sum / 3.0 / p.horizon;
    st.avg_energy += o.events.consumed / p.horizon;
    st.cost += (p.aoi_weight * sum + p.energy_weight * o.events.consumed) / p.horizon;
  };
  const EvalReport r = run_eval(env, aoi_greedy_policy(), 8, 3, sink);
  const EvalReport again = aggregate(raw);
  CHECK(r.mean_aoi == doctest::Approx(again.mean_aoi).epsilon(1e-12));
  CHECK(r.mean_energy == doctest::Approx(again.mean_energy).epsilon(1e-12));
  CHECK(r.mean_cost == doctest::Approx(again.mean_cost).epsilon(1e-12));
  for (const EpisodeStats& e : r.per_episode) {
    CHECK(e.cost == doctest::Approx(p.aoi_weight * 3.0 * e.avg_aoi + p.energy_weight * e.avg_energy)
                        .epsilon(1e-12));
  }
}

TEST_CASE("single-cell sweep equals run_eval") {
  ExperimentConfig c;
  c.eval_episodes = 4;
  const auto cells = run_sweep(c, 99, [](const ExperimentConfig&, const Environment&, std::uint64_t) {
    return aoi_greedy_policy();
  });
  REQUIRE(cells.size() == 1);
  const Environment env(build_task(c), c.scenario);
  const EvalReport direct = run_eval(env, aoi_greedy_policy(), 4, 99);
  CHECK(cells[0].report.mean_cost == direct.mean_cost);
  CHECK(cells[0].report.mean_aoi == direct.mean_aoi);
  CHECK(cells[0].n_sns == 3);

  c.sweep.n_sns = {2, 3};
  c.sweep.arrival_rate = {0.1, 0.5};
  const auto grid = run_sweep(c, 99, [](const ExperimentConfig&, const Environment&, std::uint64_t) {
    return random_policy();
  });
  CHECK(grid.size() == 4);
  CHECK(grid[3].n_sns == 3);
  CHECK(grid[3].arrival_rate == 0.5);
}

TEST_CASE("checkpoints") {
  const Environment env = desk_env(3);
  const ModelConfig m{8, 1, 8, 1};
  Rng rng(6);
  Checkpoint c;
  c.policy = init_policy(actor_architecture(env, m), rng);
  c.critic = init_critic(critic_architecture(env, m), rng);
  c.reward_scale = 1.0 / 3.0;
  c.capacity = 3;
  const std::string file = temp_path("ckpt.json");
  save_checkpoint(file, c);

  const Checkpoint back = load_checkpoint(file, actor_architecture(env, m));
  CHECK(flatten(back.policy) == flatten(c.policy));
  CHECK(flatten(back.critic) == flatten(c.critic));
  CHECK(back.reward_scale == c.reward_scale);
  CHECK(back.capacity == 3);

  CHECK_THROWS_AS(load_checkpoint(file, actor_architecture(desk_env(4), m)), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(file, actor_architecture(env, ModelConfig{16, 1, 8, 1})),
                  std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.json")), std::runtime_error);
  {
    std::ofstream out(file);
    out << "{\"format\": \"suav-checkpoint\", \"version\": 1, \"kind\":";
  }
  CHECK_THROWS_AS(load_checkpoint(file), std::runtime_error);
  std::remove(file.c_str());
}

TEST_CASE("formatted doubles round trip") {
  for (double v : {0.1, 1.0 / 3.0, -1234.5678e-9, 172.38764312}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
