// Acceptance suite. Usage: acceptance <criterion> with criterion in c1..c9.
// Prints one PASS/FAIL line per criterion and exits non-zero on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>

#include "nets.hpp"
#include "oracles.hpp"
#include "suav/harness.hpp"

using namespace suav;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  return pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double got, const oracle::Real& want) {
  const oracle::Real diff = abs(oracle::Real(got) - want);
  const oracle::Real scale = abs(want);
  return static_cast<double>(scale > 0 ? diff / scale : diff);
}

// ---------------------------------------------------------------------------

int c1_physics() {
  const auto t0 = Clock::now();
  const ScenarioParams s;
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double v = 20.0 * i / 9.0, a = -40.0 + 80.0 * j / 9.0;
      worst = std::max(worst, rel_err(rotor_thrust(v, a, s.power), oracle::thrust(v, a)));
      worst = std::max(worst, rel_err(propulsion_power(v, a, s.power), oracle::power(v, a)));
    }
  }
  for (int i = 0; i < 100; ++i) {
    const double h = 200.0 * i / 99.0;
    worst = std::max(worst, rel_err(solar_energy(h, s.harvest, 0.5), oracle::solar(h)));
    const double d = 100.0 + 400.0 * i / 99.0;
    worst = std::max(worst, rel_err(los_probability(d, 100.0, s.channel),
                                    oracle::los(oracle::Real(d), 100)));
    const oracle::Real g = oracle::gain_los(oracle::Real(d));
    worst = std::max(worst, rel_err(large_scale_gain(d, true, s.channel), g));
    worst = std::max(worst, rel_err(large_scale_gain(d, false, s.channel), g * oracle::Real("0.2")));
    const ChannelDraw draw{true, 1.0, large_scale_gain(d, true, s.channel)};
    worst = std::max(worst, rel_err(upload_snr(draw, s.channel), oracle::snr(g)));
    worst = std::max(worst, rel_err(offload_rate(draw, s.channel), oracle::rate(g)));
  }
  const double hover = propulsion_power(0.0, 0.0, s.power);
  const double harvest100 = solar_energy(100.0, s.harvest, 0.5);
  const double secs = seconds_since(t0);
  const bool pass = worst <= 1e-9 && std::abs(hover - 172.4) < 0.05 &&
                    std::abs(harvest100 - 23.77) < 0.01 && secs < 1.0;
  return report("C1", pass,
                fmt("physics oracles: max rel err %.3g (tol 1e-9), hover %.4f W, harvest(100 m) "
                    "%.4f J, %.3f s (limit 1 s)",
                    worst, hover, harvest100, secs));
}

// ---------------------------------------------------------------------------

int c2_event_replay() {
  const auto t0 = Clock::now();
  Rng fuzz(2024);
  long slots = 0, mismatches = 0, restoring = 0, uploads = 0, offloads = 0;
  while (slots < 100000) {
    ExperimentConfig c;
    c.layout.n_sns = 1 + static_cast<int>(fuzz.uniform_index(6));
    c.layout.seed = fuzz.next_u64();
    c.scenario.arrival_rate = fuzz.uniform();
    c.scenario.harvest.arrival_prob = fuzz.uniform();
    c.scenario.battery.initial_level = fuzz.uniform(1500.0, 6000.0);
    const Environment env(build_task(c), c.scenario);
    const ScenarioParams& p = env.params();
    Rng rng(fuzz.next_u64());

    EnvState state = env.reset();
    // Replayed quantities.
    FreshnessState f = state.freshness;
    BatteryState b = state.battery;
    double speed = state.uav.speed;
    for (int t = 0; t < p.horizon; ++t, ++slots) {
      const CompoundAction a = random_action(env, state, rng);
      const StepOutcome o = env.step(state, a, rng);
      const StepEvents& ev = o.events;

      f = advance_sn_lifetimes(f, ev.arrivals);
      std::optional<UploadEvent> up;
      if (ev.scheduled != 0) up = UploadEvent{ev.scheduled - 1, ev.upload_success};
      f = advance_uav_lifetimes(f, up);
      f = advance_aoi(f, ev.offload_success);
      const double accel = (ev.speed_next - speed) / p.kinematics.slot_seconds;
      const double consumed =
          slot_energy(b.mode, b.level, ev.scheduled != 0, ev.offload_requested, speed, accel,
                      p.power, p.battery, p.kinematics.slot_seconds, p.schedule_seconds);
      b = update_battery(b, ev.harvested, consumed, p.battery).state;
      speed = o.next_state.uav.speed;

      const EnvState& n = o.next_state;
      if (!(f.aoi == n.freshness.aoi && f.sn_lifetime == n.freshness.sn_lifetime &&
            f.uav_lifetime == n.freshness.uav_lifetime && b.level == n.battery.level &&
            b.mode == n.battery.mode && consumed == ev.consumed)) {
        ++mismatches;
      }
      restoring += ev.mode == Mode::restoring;
      uploads += ev.upload_success;
      offloads += ev.offload_success;
      state = n;
    }
  }
  const double secs = seconds_since(t0);
  return report("C2", mismatches == 0 && secs < 10.0,
                fmt("event replay: %ld slots, %ld mismatches (%ld restoring, %ld uploads, %ld "
                    "offloads), %.2f s (limit 10 s)",
                    slots, mismatches, restoring, uploads, offloads, secs));
}

// ---------------------------------------------------------------------------

int c3_constraints() {
  const auto t0 = Clock::now();
  ExperimentConfig c;
  c.scenario.horizon = 100;
  const Environment env(build_task(c), c.scenario);
  const ScenarioParams& p = env.params();
  const auto& k = p.kinematics;
  const auto& mask = env.action_mask();
  Rng rng(33);
  long violations = 0, steps = 0, restoring = 0;
  double worst_return = 0.0;
  const int episodes = 10000;
  for (int e = 0; e < episodes; ++e) {
    EnvState s = env.reset();
    if (!(s.uav.position == env.task().layout.dc_position)) ++violations;
    double ret = 0.0, recomputed = 0.0;
    for (int t = 0; t < p.horizon; ++t, ++steps) {
      // Raw, unbounded network-style outputs go through the clamp.
      const PolicyAction raw{rng.uniform_index(mask.size()), 3.0 * rng.normal(),
                             3.0 * rng.normal()};
      const CompoundAction a = env.decode(raw, s);
      const StepOutcome o = env.step(s, a, rng);
      const EnvState& n = o.next_state;
      const bool working = s.battery.mode == Mode::working;
      bool ok = n.uav.speed >= 0.0 && n.uav.speed <= k.max_speed;
      ok = ok && n.uav.heading >= 0.0 && n.uav.heading < 2.0 * std::numbers::pi;
      if (working && s.slot >= 2) {
        ok = ok && std::abs(heading_difference(s.uav.heading, a.heading)) <= k.max_turn + 1e-12;
      }
      ok = ok && n.battery.level >= 0.0 && n.battery.level <= p.battery.capacity;
      const double lvl = n.battery.level;
      Mode expect = s.battery.mode;
      if (o.events.energy_exhausted || lvl < p.battery.restore_threshold) {
        expect = Mode::restoring;
      } else if (s.battery.mode == Mode::restoring && lvl >= p.battery.resume_threshold) {
        expect = Mode::working;
      }
      ok = ok && n.battery.mode == expect;
      if (!working) ok = ok && n.uav.position == s.uav.position;
      if (!ok) ++violations;
      restoring += !working;
      ret += o.reward;
      double sum = 0.0;
      for (int d : n.freshness.aoi) sum += d;
      recomputed += p.aoi_weight * sum + p.energy_weight * o.events.consumed;
      s = n;
    }
    recomputed = -recomputed / p.horizon;
    worst_return = std::max(worst_return, std::abs(ret - recomputed) / std::max(1.0, std::abs(recomputed)));
  }
  const double secs = seconds_since(t0);
  return report("C3", violations == 0 && worst_return <= 1e-9 && secs < 30.0,
                fmt("constraints: %d episodes, %ld steps, %ld violations, %ld restoring slots, "
                    "max return mismatch %.3g (tol 1e-9), %.2f s (limit 30 s)",
                    episodes, steps, violations, restoring, worst_return, secs));
}

// ---------------------------------------------------------------------------

int c4_gradients() {
  using namespace testnet;
  const auto t0 = Clock::now();
  Rng rng(44);
  const LossKind actor[] = {LossKind::surrogate_discrete, LossKind::surrogate_continuous,
                            LossKind::reinforce_discrete, LossKind::reinforce_continuous,
                            LossKind::kl_discrete,        LossKind::kl_continuous};
  int checks = 0, failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const PolicyParams p = random_policy(rng);
    const LossBatch b = random_batch(p, random_policy(rng), rng, 6);
    for (LossKind kind : actor) {
      const Vector fd = finite_difference(
          p, [&](const PolicyParams& q) { return evaluate_loss(kind, q, b).value; });
      failures += first_mismatch(evaluate_loss(kind, p, b).gradient, fd) >= 0;
      ++checks;
    }
    for (Head head : {Head::discrete, Head::continuous}) {
      const Vector fd = finite_difference(
          p, [&](const PolicyParams& q) { return inner_loss(q, b, head, 18.0).value; });
      failures += first_mismatch(inner_loss(p, b, head, 18.0).gradient, fd) >= 0;
      ++checks;
    }
    const CriticParams c = random_critic(rng);
    const Vector fd = finite_difference(
        c, [&](const CriticParams& q) { return evaluate_loss(LossKind::critic_mse, q, b).value; });
    failures += first_mismatch(evaluate_loss(LossKind::critic_mse, c, b).gradient, fd) >= 0;
    ++checks;
  }
  const double secs = seconds_since(t0);
  return report("C4", failures == 0 && secs < 60.0,
                fmt("gradient checks: 100 trials, %d loss checks, %d failures (rel 1e-4), "
                    "%.2f s (limit 60 s)",
                    checks, failures, secs));
}

// ---------------------------------------------------------------------------

int c5_trust_region() {
  const auto t0 = Clock::now();
  // GAE part.
  Rng rng(55);
  double worst_gae = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(20), v(21);
    for (double& x : r) x = 10.0 * rng.normal();
    for (double& x : v) x = 10.0 * rng.normal();
    v.back() = 0.0;
    const double gamma = rng.uniform(0.8, 1.0), lambda = rng.uniform(0.0, 1.0);
    const auto adv = compute_gae(r, v, gamma, lambda).first;
    for (std::size_t t = 0; t < 20; ++t) {
      double want = 0.0, w = 1.0;
      for (std::size_t k = t; k < 20; ++k, w *= gamma * lambda) {
        want += w * (r[k] + gamma * v[k + 1] - v[k]);
      }
      worst_gae = std::max(worst_gae, std::abs(adv[t] - want));
    }
  }

  // 200 desk-scale updates.
  const ExperimentConfig c;
  const Environment env(build_task(c), c.scenario);
  TrainOptions opt;
  opt.model = c.model;
  opt.episodes = 200 * episodes_per_update(c.trust, c.scenario.horizon);
  int accepted = 0, bad = 0;
  double max_kl = 0.0;
  opt.on_update = [&](const UpdateRecord& u, const PolicyParams&, const CriticParams&) {
    for (const TrustRegionStats* s : {&u.discrete, &u.continuous}) {
      if (!s->accepted) continue;
      ++accepted;
      max_kl = std::max(max_kl, s->kl);
      if (!(s->kl <= 1.5 * c.trust.max_kl) || !(s->loss_after < s->loss_before)) ++bad;
    }
  };
  const TrainResult res = train_cadrl(env, c.trust, 5, opt);
  const double secs = seconds_since(t0);
  const bool pass = worst_gae <= 1e-10 && res.updates.size() == 200 && bad == 0 && accepted > 0;
  return report("C5", pass,
                fmt("trust region: %zu updates, %d accepted head steps, %d violations, max KL "
                    "%.5f (bound %.3f); GAE max abs err %.3g (tol 1e-10); %.0f s",
                    res.updates.size(), accepted, bad, max_kl, 1.5 * c.trust.max_kl, worst_gae,
                    secs));
}

// ---------------------------------------------------------------------------

int c6_learning() {
  const ExperimentConfig c;
  const Environment env(build_task(c), c.scenario);
  const int eval_eps = c.eval_episodes;
  double cadrl_cost = 0.0, cadrl_energy = 0.0, worst_seed_secs = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = Clock::now();
    TrainOptions opt;
    opt.model = c.model;
    opt.episodes = c.episodes;
    const TrainResult res = train_cadrl(env, c.trust, seed, opt);
    const EvalReport r =
        run_eval(env, network_policy(res.policy, c.eval_greedy), eval_eps, derive_seed(seed, "eval"));
    cadrl_cost += r.mean_cost / 5.0;
    cadrl_energy += r.mean_energy / 5.0;
    per_seed += fmt(" %.1f", r.mean_cost);
    worst_seed_secs = std::max(worst_seed_secs, seconds_since(t0));
  }
  double random_cost = 0.0, greedy_cost = 0.0, greedy_energy = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const EvalReport rr = run_eval(env, random_policy(), eval_eps, derive_seed(seed, "eval"));
    const EvalReport gr = run_eval(env, aoi_greedy_policy(), eval_eps, derive_seed(seed, "eval"));
    random_cost += rr.mean_cost / 5.0;
    greedy_cost += gr.mean_cost / 5.0;
    greedy_energy += gr.mean_energy / 5.0;
  }
  const double gain = 1.0 - cadrl_cost / random_cost;
  const bool pass = gain >= 0.20 && cadrl_cost < greedy_cost && greedy_energy > cadrl_energy &&
                    worst_seed_secs < 1800.0;
  return report("C6", pass,
                fmt("learning: CADRL cost %.1f (seeds%s) vs random %.1f (%.1f%% better, need 20%%) "
                    "vs AoI-greedy %.1f; energy/slot CADRL %.2f J vs AoI-greedy %.2f J; slowest "
                    "seed %.0f s",
                    cadrl_cost, per_seed.c_str(), random_cost, 100.0 * gain, greedy_cost,
                    cadrl_energy, greedy_energy, worst_seed_secs));
}

// ---------------------------------------------------------------------------

int c7_trends() {
  const auto t0 = Clock::now();
  const auto greedy = [](const ExperimentConfig&, const Environment&, std::uint64_t) {
    return aoi_greedy_policy();
  };
  ExperimentConfig c;
  c.eval_episodes = 2000;
  c.sweep.n_sns = {2, 4, 6};
  const auto by_n = run_sweep(c, 7, greedy);
  c.sweep.n_sns.clear();
  c.sweep.arrival_rate = {0.02, 0.1, 0.5, 1.0};
  const auto by_rate = run_sweep(c, 7, greedy);

  bool n_ok = true, rate_ok = true;
  std::string n_col, rate_col;
  for (std::size_t i = 0; i < by_n.size(); ++i) {
    n_col += fmt(" %.3f", by_n[i].report.mean_aoi);
    if (i > 0 && by_n[i].report.mean_aoi < by_n[i - 1].report.mean_aoi) n_ok = false;
  }
  for (std::size_t i = 0; i < by_rate.size(); ++i) {
    rate_col += fmt(" %.3f", by_rate[i].report.mean_aoi);
    if (i > 0 && by_rate[i].report.mean_aoi > by_rate[i - 1].report.mean_aoi) rate_ok = false;
  }
  const double a = by_rate[2].report.mean_aoi, b = by_rate[3].report.mean_aoi;
  const double plateau = std::abs(a - b) / std::max(a, b);
  const double secs = seconds_since(t0);
  const bool pass = n_ok && rate_ok && plateau <= 0.10 && secs < 3600.0;
  return report("C7", pass,
                fmt("trends (AoI-greedy, %d episodes per cell): AoI by N {2,4,6}:%s (%s); AoI by "
                    "lambda0 {0.02,0.1,0.5,1}:%s (%s); plateau gap %.1f%% (need <= 10%%); %.0f s",
                    c.eval_episodes, n_col.c_str(), n_ok ? "non-decreasing" : "NOT non-decreasing",
                    rate_col.c_str(), rate_ok ? "non-increasing" : "NOT non-increasing",
                    100.0 * plateau, secs));
}

// ---------------------------------------------------------------------------

// First episode at which the trailing 100-episode mean cost reaches `target`.
int episodes_to_reach(const std::vector<CurveRecord>& curve, double target) {
  double window = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    window += curve[i].stats.cost;
    if (i >= 100) window -= curve[i - 100].stats.cost;
    if (i >= 99 && window / 100.0 <= target + 1e-9 * std::abs(target)) {
      return static_cast<int>(i + 1);
    }
  }
  return static_cast<int>(curve.size()) + 1;  // never reached
}

double best_moving_average(const std::vector<CurveRecord>& curve) {
  double window = 0.0, best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    window += curve[i].stats.cost;
    if (i >= 100) window -= curve[i - 100].stats.cost;
    if (i >= 99) best = std::min(best, window / 100.0);
  }
  return best;
}

int c8_meta_adaptation() {
  const auto t0 = Clock::now();
  const ExperimentConfig c;
  TaskDistribution dist = c.tasks;
  MetaConfig meta_cfg = c.meta;
  std::vector<double> diffs;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MetaOptions mo;
    mo.model = c.model;
    const MetaResult meta = meta_train(dist, c.scenario, meta_cfg, seed, mo);

    Rng task_rng(derive_seed(seed, "heldout"));
    const Task task = sample_tasks(dist, 1, task_rng).front();
    const Environment env(task, c.scenario);

    TrainOptions scratch;
    scratch.model = c.model;
    scratch.episodes = c.episodes;
    const TrainResult s = train_cadrl(env, c.trust, derive_seed(seed, "scratch"), scratch);
    double target = 0.0;
    for (std::size_t i = s.curve.size() - 100; i < s.curve.size(); ++i) {
      target += s.curve[i].stats.cost / 100.0;
    }

    TrainOptions warm = scratch;
    warm.initial_policy = meta.policy;
    warm.initial_critic = meta.critic;
    warm.reward_scale = meta.reward_scale;
    const TrainResult w = train_cadrl(env, c.trust, derive_seed(seed, "warm"), warm);

    const int e_scratch = episodes_to_reach(s.curve, target);
    const int e_warm = episodes_to_reach(w.curve, target);
    diffs.push_back(0.5 * e_scratch - e_warm);
    rows += fmt(" [seed %d: N=%zu target %.1f, scratch %d, warm %d, warm best MA100 %.1f]",
                static_cast<int>(seed), task.n_sns(), target, e_scratch, e_warm,
                best_moving_average(w.curve));
    std::fprintf(stderr, "C8 seed %d done after %.0f s%s\n", static_cast<int>(seed),
                 seconds_since(t0), rows.c_str());
  }
  // Paired bootstrap over seeds of mean(0.5 e_scratch - e_warm).
  Rng boot(888);
  const int draws = 20000;
  int nonneg = 0;
  for (int b = 0; b < draws; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i) m += diffs[boot.uniform_index(diffs.size())];
    nonneg += m >= 0.0;
  }
  const double confidence = static_cast<double>(nonneg) / draws;
  const double mean_diff = std::accumulate(diffs.begin(), diffs.end(), 0.0) / diffs.size();
  const double secs = seconds_since(t0);
  const bool pass = mean_diff >= 0.0 && confidence >= 0.95 && secs < 7200.0;
  return report("C8", pass,
                fmt("meta adaptation: mean(0.5*e_scratch - e_warm) %.1f episodes, bootstrap "
                    "P(>= 0) %.3f (need 0.95);%s; %.0f s",
                    mean_diff, confidence, rows.c_str(), secs));
}

// ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int c9_reproducibility(const std::string& cli) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "suav_acceptance_c9";
  fs::remove_all(root);
  struct Job {
    std::string args;
    std::vector<std::string> files;
  };
  const std::vector<Job> jobs{
      {"train --seed 12 --episodes 123 --override eval_episodes=20",
       {"manifest.txt", "curve.csv", "summary.csv", "checkpoint.json", "trace.ndjson"}},
      {"baseline --seed 12 --episodes 50 --policy random", {"manifest.txt", "summary.csv"}},
      {"meta-train --seed 12 --override meta.meta_iters=3", {"manifest.txt", "curve.csv"}},
  };
  int identical = 0, compared = 0;
  std::string failures;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (const char* run : {"a", "b"}) {
      const fs::path out = root / std::to_string(j) / run;
      const std::string cmd = cli + " " + jobs[j].args + " --out " + out.string() + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) {
        return report("C9", false, "reproducibility: command failed: " + cmd);
      }
    }
    for (const std::string& f : jobs[j].files) {
      const std::string a = slurp(root / std::to_string(j) / "a" / f);
      const std::string b = slurp(root / std::to_string(j) / "b" / f);
      ++compared;
      if (!a.empty() && a == b) {
        ++identical;
      } else {
        failures += " " + std::to_string(j) + "/" + f;
      }
    }
  }
  fs::remove_all(root);
  return report("C9", identical == compared,
                fmt("reproducibility: %d/%d output files bit-identical across paired runs with "
                    "identical manifests%s",
                    identical, compared, failures.empty() ? "" : (" (differ:" + failures + ")").c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance c1|c2|...|c9 [cli path for c9]\n");
    return 2;
  }
  const std::string which = argv[1];
  try {
    if (which == "c1") return c1_physics();
    if (which == "c2") return c2_event_replay();
    if (which == "c3") return c3_constraints();
    if (which == "c4") return c4_gradients();
    if (which == "c5") return c5_trust_region();
    if (which == "c6") return c6_learning();
    if (which == "c7") return c7_trends();
    if (which == "c8") return c8_meta_adaptation();
    if (which == "c9") return c9_reproducibility(argc > 2 ? argv[2] : "suav");
  } catch (const std::exception& e) {
    return report(which.c_str(), false, std::string("exception: ") + e.what());
  }
  std::fprintf(stderr, "unknown criterion %s\n", which.c_str());
  return 2;
}
