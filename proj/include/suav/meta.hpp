#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "suav/cadrl.hpp"

namespace suav {

/// Tasks differ only in SN count and placement; everything else comes from
/// the shared scenario.
struct TaskDistribution {
  int min_sns = 2;
  int max_sns = 4;
  double area_side = 200.0;
  Vec2 dc_position{0.0, 160.0};

  void validate() const;
  /// Encoding capacity shared by every task (the largest SN count).
  std::size_t capacity() const { return static_cast<std::size_t>(max_sns); }
};

struct MetaConfig {
  int meta_iters = 300;      // L_meta
  int tasks_per_iter = 4;    // I
  int trajs_per_task = 3;    // K
  double inner_lr = 0.1;     // alpha_1
  int inner_steps = 1;
  TrustRegionConfig outer;

  void validate() const;
};

std::vector<Task> sample_tasks(const TaskDistribution& dist, std::size_t count, Rng& rng);

/// Per-task adaptation objective (1 / (K T)) sum log pi(a|s) A(s) for one
/// head, returned with its exact gradient. Adaptation ascends it. The batch
/// weight field is ignored; `normalizer` is K T.
LossValue inner_loss(const PolicyParams& p, const LossBatch& batch, Head head, double normalizer);

struct AdaptedPolicy {
  std::size_t task_id = 0;
  PolicyParams params;
  int meta_version = 0;
  int inner_steps = 0;
};

struct InnerResult {
  AdaptedPolicy adapted;
  RolloutBatch train;  // trajectories of the last inner step
  std::vector<EpisodeStats> stats;  // episodes collected before adapting
};

/// Collects K trajectories, takes the inner gradient step(s) on both heads
/// and the trunk. Throws std::runtime_error on a non-finite gradient.
InnerResult inner_adapt(const PolicyParams& meta, const CriticParams& critic,
                        const Environment& env, const MetaConfig& cfg, double reward_scale,
                        Rng& rng, std::size_t task_id = 0, int meta_version = 0);

/// Validation data of one task, prepared and snapshotted at its adapted
/// parameters.
struct MetaTaskBatch {
  PolicyParams adapted;
  LossBatch validation;
};

struct MetaUpdateStats {
  TrustRegionStats discrete;
  TrustRegionStats continuous;
  double pooled_kl = 0.0;
};

/// First-order outer update: the summed per-task surrogate is differentiated
/// at each adapted point, and one trust-region step per head moves the meta
/// parameters (and, in lockstep, every adapted point).
MetaUpdateStats meta_update(PolicyParams& meta, std::vector<MetaTaskBatch>& tasks,
                            const TrustRegionConfig& cfg);

struct MetaCurveRecord {
  int iteration = 0;
  double pre_adapt_return = 0.0;   // mean episode return before adaptation
  double post_adapt_return = 0.0;  // mean validation return after adaptation
  double post_adapt_aoi = 0.0;
  double post_adapt_energy = 0.0;
  MetaUpdateStats update;
};

struct MetaOptions {
  ModelConfig model;
  std::optional<PolicyParams> initial_policy;
  std::function<void(const MetaCurveRecord&)> on_iteration;
};

struct MetaResult {
  PolicyParams policy;
  CriticParams critic;
  double reward_scale = 1.0;
  std::vector<MetaCurveRecord> curve;
};

MetaResult meta_train(const TaskDistribution& dist, const ScenarioParams& scenario,
                      const MetaConfig& cfg, std::uint64_t seed, const MetaOptions& options);

struct AdaptationRecord {
  int step = 0;
  EpisodeStats stats;  // mean over the episodes collected at this step
};

struct AdaptationResult {
  AdaptedPolicy adapted;
  std::vector<AdaptationRecord> curve;
};

/// Repeated inner steps from the meta-policy on a new task; step 0 evaluates
/// the meta-policy as-is.
AdaptationResult adapt_to_new_task(const PolicyParams& meta, const CriticParams& critic,
                                   const Environment& env, int steps, const MetaConfig& cfg,
                                   double reward_scale, Rng& rng);

}  // namespace suav
