#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "suav/cadrl.hpp"
#include "suav/meta.hpp"

namespace suav {

inline constexpr const char* kVersion = "0.1.0";

/// Node layout source: explicit positions, or `n_sns` positions drawn from
/// `seed` (the first N of one sequence, so layouts of different sizes nest).
struct LayoutConfig {
  int n_sns = 3;
  std::uint64_t seed = 7;
  std::vector<Vec2> positions;
  Vec2 dc_position{0.0, 160.0};
  double area_side = 200.0;
  int capacity = 0;  // 0 = n_sns
};

struct SweepAxes {
  std::vector<int> n_sns;
  std::vector<double> arrival_rate;
  std::vector<double> harvest_prob;
};

/// Everything a run needs. Defaults are the desk-scale profile.
struct ExperimentConfig {
  ScenarioParams scenario;
  LayoutConfig layout;
  TrustRegionConfig trust;
  ModelConfig model;
  MetaConfig meta;
  TaskDistribution tasks;
  int episodes = 2000;
  int eval_episodes = 100;
  bool eval_greedy = true;
  std::string policy = "aoi_greedy";  // sweep/eval policy source
  int adapt_steps = 20;
  std::string adapt_mode = "inner";  // "inner" or "cadrl"
  SweepAxes sweep;

  ExperimentConfig();
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Unknown keys are rejected. dB-valued keys (beta0_db, noise_power_dbm,
/// snr_threshold_db) are converted to linear scale here.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON
/// when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// FNV-1a over the canonical JSON dump.
std::uint64_t config_hash(const nlohmann::json& resolved);

NodeLayout build_layout(const LayoutConfig& l);
Task build_task(const ExperimentConfig& c);

// ---------------------------------------------------------------------------
// Policies

using PolicyFn = std::function<CompoundAction(const Environment&, const EnvState&, Rng&)>;

/// Heads for the data-richest SN (largest AoI among SNs holding a packet),
/// schedules it when its LoS-branch SNR meets the threshold, and offloads
/// whenever the UAV holds data or collects in this slot.
CompoundAction aoi_greedy_action(const Environment& env, const EnvState& state);
/// Uniform valid discrete index, uniform speed and turn within limits.
CompoundAction random_action(const Environment& env, const EnvState& state, Rng& rng);

PolicyFn aoi_greedy_policy();
PolicyFn random_policy();
PolicyFn network_policy(const PolicyParams& params, bool greedy);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  int episodes = 0;
  double mean_aoi = 0.0;      // per SN per slot
  double mean_energy = 0.0;   // J per slot
  double mean_cost = 0.0;     // weighted objective per episode, = -return
  double aoi_half_width = 0.0;  // 95% normal-approximation half widths
  double energy_half_width = 0.0;
  double cost_half_width = 0.0;
  std::vector<EpisodeStats> per_episode;
};

EvalReport aggregate(const std::vector<EpisodeStats>& episodes);

/// Optional per-slot sink: receives (episode, slot, state before, action,
/// outcome).
using SlotSink = std::function<void(int, int, const EnvState&, const CompoundAction&,
                                    const StepOutcome&)>;

EvalReport run_eval(const Environment& env, const PolicyFn& policy, int episodes,
                    std::uint64_t seed, const SlotSink& sink = {});

/// One trace line (NDJSON record) for a slot.
nlohmann::json slot_record(int episode, int slot, const EnvState& before,
                           const CompoundAction& action, const StepOutcome& out);

struct SweepCell {
  int n_sns = 0;
  double arrival_rate = 0.0;
  double harvest_prob = 0.0;
  EvalReport report;
};

/// Cartesian product over the sweep axes (an empty axis keeps the base
/// value). `policy_for` builds the policy of each cell.
std::vector<SweepCell> run_sweep(
    const ExperimentConfig& base, std::uint64_t seed,
    const std::function<PolicyFn(const ExperimentConfig&, const Environment&, std::uint64_t)>&
        policy_for);

// ---------------------------------------------------------------------------
// Checkpoints and output files

struct Checkpoint {
  std::string kind = "cadrl";  // "cadrl" or "meta"
  PolicyParams policy;
  CriticParams critic;
  double reward_scale = 1.0;
  int capacity = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
/// Throws std::runtime_error on a missing/corrupt file and, when
/// `expected` is given, on an actor architecture mismatch.
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ActorArchitecture>& expected = std::nullopt);

void write_manifest(const std::string& path, const std::string& command,
                    const nlohmann::json& resolved, std::uint64_t seed);
void write_curve_csv(const std::string& path, const std::vector<CurveRecord>& curve);
void write_meta_curve_csv(const std::string& path, const std::vector<MetaCurveRecord>& curve);
void write_adaptation_csv(const std::string& path, const std::vector<AdaptationRecord>& curve);
void write_summary_csv(const std::string& path, const std::string& policy, const EvalReport& r,
                       int n_sns);
void write_sweep_csv(const std::string& path, const std::string& policy,
                     const std::vector<SweepCell>& cells);

/// Formats a double so that it round-trips exactly.
std::string format_double(double v);

}  // namespace suav
