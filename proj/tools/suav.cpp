// Command-line driver: train, meta-train, adapt, eval, sweep, baseline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "suav/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace suav;

namespace {

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  int episodes = -1;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string policy;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file (defaults to the desk profile)");
  cmd->add_option("--seed", a.seed, "Master seed")->required();
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--episodes", a.episodes, "Episode count override");
  cmd->add_option("--override", a.overrides, "key.path=value, repeatable");
}

struct Run {
  ExperimentConfig cfg;
  json resolved;
  fs::path dir;
};

Run prepare(const std::string& command, const CommonArgs& a, bool episodes_are_eval) {
  json doc = to_json(ExperimentConfig{});
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw UsageError("cannot open config " + a.config);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error&) {
      throw UsageError("config parse error in " + a.config);
    }
    doc.merge_patch(file);
  }
  for (const std::string& o : a.overrides) apply_override(doc, o);
  if (a.episodes >= 0) doc[episodes_are_eval ? "eval_episodes" : "episodes"] = a.episodes;

  Run run;
  run.cfg = config_from_json(doc);
  run.resolved = to_json(run.cfg);
  run.dir = a.out;
  fs::create_directories(run.dir);

  std::string cmdline = command;
  if (!a.checkpoint.empty()) cmdline += " --checkpoint " + a.checkpoint;
  if (!a.policy.empty()) cmdline += " --policy " + a.policy;
  write_manifest((run.dir / "manifest.txt").string(), cmdline, run.resolved, a.seed);
  return run;
}

std::string path(const Run& r, const char* name) { return (r.dir / name).string(); }

EvalReport evaluate_with_trace(const Run& run, const Environment& env, const PolicyFn& policy,
                               std::uint64_t seed) {
  std::ofstream trace(path(run, "trace.ndjson"));
  if (!trace) throw std::runtime_error("cannot write trace.ndjson");
  const auto sink = [&trace](int e, int t, const EnvState& s, const CompoundAction& a,
                             const StepOutcome& o) {
    trace << slot_record(e, t, s, a, o).dump() << '\n';
  };
  return run_eval(env, policy, run.cfg.eval_episodes, derive_seed(seed, "eval"), sink);
}

PolicyFn baseline(const std::string& name) {
  if (name == "aoi_greedy") return aoi_greedy_policy();
  if (name == "random") return random_policy();
  throw UsageError("unknown baseline policy " + name);
}

Checkpoint read_checkpoint(const std::string& file, const Environment& env, const ModelConfig& m) {
  if (file.empty()) throw UsageError("--checkpoint is required");
  return load_checkpoint(file, actor_architecture(env, m));
}

Environment checkpoint_env(const ExperimentConfig& cfg, const std::string& file) {
  // The encoding capacity comes from the checkpoint.
  std::ifstream in(file);
  if (!in) throw std::runtime_error("checkpoint not found: " + file);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error&) {
    throw std::runtime_error("checkpoint: parse error in " + file);
  }
  Task task = build_task(cfg);
  task.capacity = static_cast<std::size_t>(j.value("capacity", 0));
  return Environment(task, cfg.scenario);
}

int cmd_train(const CommonArgs& a) {
  Run run = prepare("train", a, false);
  const Environment env(build_task(run.cfg), run.cfg.scenario);
  TrainOptions opt;
  opt.episodes = run.cfg.episodes;
  opt.model = run.cfg.model;
  TrainResult res = train_cadrl(env, run.cfg.trust, a.seed, opt);
  write_curve_csv(path(run, "curve.csv"), res.curve);
  save_checkpoint(path(run, "checkpoint.json"),
                  {"cadrl", res.policy, res.critic, res.reward_scale,
                   static_cast<int>(env.task().slots())});
  const EvalReport r =
      evaluate_with_trace(run, env, network_policy(res.policy, run.cfg.eval_greedy), a.seed);
  write_summary_csv(path(run, "summary.csv"), "cadrl", r, static_cast<int>(env.n_sns()));
  return 0;
}

int cmd_meta_train(const CommonArgs& a) {
  Run run = prepare("meta-train", a, false);
  MetaOptions opt;
  opt.model = run.cfg.model;
  MetaResult res = meta_train(run.cfg.tasks, run.cfg.scenario, run.cfg.meta, a.seed, opt);
  write_meta_curve_csv(path(run, "curve.csv"), res.curve);
  save_checkpoint(path(run, "checkpoint.json"),
                  {"meta", res.policy, res.critic, res.reward_scale,
                   static_cast<int>(run.cfg.tasks.capacity())});
  return 0;
}

int cmd_adapt(const CommonArgs& a) {
  Run run = prepare("adapt", a, false);
  const Environment env = checkpoint_env(run.cfg, a.checkpoint);
  const Checkpoint ck = read_checkpoint(a.checkpoint, env, run.cfg.model);
  PolicyParams adapted;
  if (run.cfg.adapt_mode == "inner") {
    Rng rng(derive_seed(a.seed, "adapt"));
    AdaptationResult res = adapt_to_new_task(ck.policy, ck.critic, env, run.cfg.adapt_steps,
                                             run.cfg.meta, ck.reward_scale, rng);
    write_adaptation_csv(path(run, "curve.csv"), res.curve);
    adapted = res.adapted.params;
  } else {
    TrainOptions opt;
    opt.episodes = run.cfg.episodes;
    opt.model = run.cfg.model;
    opt.initial_policy = ck.policy;
    opt.initial_critic = ck.critic;
    opt.reward_scale = ck.reward_scale;
    TrainResult res = train_cadrl(env, run.cfg.trust, a.seed, opt);
    write_curve_csv(path(run, "curve.csv"), res.curve);
    adapted = res.policy;
  }
  save_checkpoint(path(run, "checkpoint.json"),
                  {"cadrl", adapted, ck.critic, ck.reward_scale, ck.capacity});
  const EvalReport r =
      evaluate_with_trace(run, env, network_policy(adapted, run.cfg.eval_greedy), a.seed);
  write_summary_csv(path(run, "summary.csv"), "adapted", r, static_cast<int>(env.n_sns()));
  return 0;
}

int cmd_eval(const CommonArgs& a) {
  Run run = prepare("eval", a, true);
  if (a.checkpoint.empty()) {
    const std::string name = a.policy.empty() ? run.cfg.policy : a.policy;
    const Environment env(build_task(run.cfg), run.cfg.scenario);
    const EvalReport r = evaluate_with_trace(run, env, baseline(name), a.seed);
    write_summary_csv(path(run, "summary.csv"), name, r, static_cast<int>(env.n_sns()));
    return 0;
  }
  const Environment env = checkpoint_env(run.cfg, a.checkpoint);
  const Checkpoint ck = read_checkpoint(a.checkpoint, env, run.cfg.model);
  const EvalReport r =
      evaluate_with_trace(run, env, network_policy(ck.policy, run.cfg.eval_greedy), a.seed);
  write_summary_csv(path(run, "summary.csv"), ck.kind, r, static_cast<int>(env.n_sns()));
  return 0;
}

int cmd_baseline(const CommonArgs& a) {
  Run run = prepare("baseline", a, true);
  const std::string name = a.policy.empty() ? run.cfg.policy : a.policy;
  const Environment env(build_task(run.cfg), run.cfg.scenario);
  const EvalReport r = evaluate_with_trace(run, env, baseline(name), a.seed);
  write_summary_csv(path(run, "summary.csv"), name, r, static_cast<int>(env.n_sns()));
  return 0;
}

int cmd_sweep(const CommonArgs& a) {
  Run run = prepare("sweep", a, true);
  const std::string name = a.policy.empty() ? run.cfg.policy : a.policy;
  std::function<PolicyFn(const ExperimentConfig&, const Environment&, std::uint64_t)> policy_for;
  if (name == "cadrl") {
    policy_for = [](const ExperimentConfig& c, const Environment& env, std::uint64_t seed) {
      TrainOptions opt;
      opt.episodes = c.episodes;
      opt.model = c.model;
      const TrainResult res = train_cadrl(env, c.trust, seed, opt);
      return network_policy(res.policy, c.eval_greedy);
    };
  } else {
    const PolicyFn fixed = baseline(name);
    policy_for = [fixed](const ExperimentConfig&, const Environment&, std::uint64_t) {
      return fixed;
    };
  }
  const std::vector<SweepCell> cells = run_sweep(run.cfg, derive_seed(a.seed, "eval"), policy_for);
  write_sweep_csv(path(run, "summary.csv"), name, cells);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV status-update collection: training, meta-training and evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs args;
  auto* train = app.add_subcommand("train", "Train a CADRL policy on the configured task");
  auto* meta = app.add_subcommand("meta-train", "Meta-train over the task distribution");
  auto* adapt = app.add_subcommand("adapt", "Adapt a meta checkpoint to the configured task");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline");
  auto* sweep = app.add_subcommand("sweep", "Evaluate over the sweep axes");
  auto* base = app.add_subcommand("baseline", "Evaluate the aoi_greedy or random baseline");
  for (auto* c : {train, meta, adapt, eval, sweep, base}) add_common(c, args);
  adapt->add_option("--checkpoint", args.checkpoint, "Meta checkpoint")->required();
  eval->add_option("--checkpoint", args.checkpoint, "Policy checkpoint");
  for (auto* c : {eval, sweep, base}) {
    c->add_option("--policy", args.policy, "aoi_greedy, random (sweep also: cadrl)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  try {
    if (*train) return cmd_train(args);
    if (*meta) return cmd_meta_train(args);
    if (*adapt) return cmd_adapt(args);
    if (*eval) return cmd_eval(args);
    if (*sweep) return cmd_sweep(args);
    return cmd_baseline(args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: invalid: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: runtime: %s\n", e.what());
    return 1;
  }
}
