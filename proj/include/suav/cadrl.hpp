#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "suav/env.hpp"
#include "suav/neural.hpp"
#include "suav/random.hpp"

namespace suav {

struct TrustRegionConfig {
  double max_kl = 0.01;       // epsilon
  double gae_lambda = 0.95;
  double discount = 0.99;
  int cg_iters = 10;
  double cg_damping = 0.1;
  int backtrack_steps = 10;
  double backtrack_coef = 0.5;
  double accept_kl_factor = 1.5;  // accept a step only if KL <= factor * max_kl
  double critic_lr = 1e-3;
  int critic_epochs = 5;
  std::size_t critic_minibatch = 64;  // J
  std::string critic_optimizer = "adam";  // "adam" or "sgd"
  bool normalize_advantages = true;
  std::size_t rollout_transitions = 2048;  // D

  void validate() const;
};

struct ModelConfig {
  int actor_width = 256;
  int actor_layers = 3;
  int critic_width = 256;
  int critic_layers = 2;
};

ActorArchitecture actor_architecture(const Environment& env, const ModelConfig& m);
CriticArchitecture critic_architecture(const Environment& env, const ModelConfig& m);

/// On-policy transitions, column-major states. Per-transition masks allow
/// pooling tasks with different active SN counts.
struct RolloutBatch {
  std::size_t state_dim = 0;
  std::size_t discrete_dim = 0;
  std::vector<double> states;  // state_dim per transition
  std::vector<std::uint8_t> masks;  // discrete_dim per transition
  std::vector<std::size_t> discrete;
  std::vector<double> raw_speed;
  std::vector<double> raw_turn;
  std::vector<double> rewards;  // as returned by the environment
  std::vector<double> logp_discrete;
  std::vector<double> logp_continuous;
  std::vector<std::uint8_t> dones;  // 1 on the last slot of an episode
  // Filled by prepare_batch.
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> targets;

  std::size_t size() const { return rewards.size(); }
  void append(const RolloutBatch& other);
};

/// Per-episode summary.
struct EpisodeStats {
  double episode_return = 0.0;
  double avg_aoi = 0.0;     // mean over slots and SNs of delta
  double avg_energy = 0.0;  // mean consumed joules per slot
  double cost = 0.0;        // -return
  int exhausted_slots = 0;
  int restoring_slots = 0;
};

/// Standard backward GAE over one episode. `values` has length
/// rewards.size() + 1 (the last entry is the bootstrap). Returns
/// (advantages, value targets = advantages + values).
std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
    double lambda);

/// Samples complete episodes with the stochastic policy and appends them.
std::vector<EpisodeStats> collect_episodes(const Environment& env, const PolicyParams& policy,
                                           int episodes, Rng& rng, RolloutBatch& out);

/// Critic values, GAE per episode segment on `reward_scale * reward`,
/// targets and (optionally) normalized advantages.
void prepare_batch(RolloutBatch& batch, const CriticParams& critic, const TrustRegionConfig& cfg,
                   double reward_scale);

/// Loss-batch view of a prepared rollout; the old-policy snapshot is taken at
/// `snapshot`.
LossBatch to_loss_batch(const RolloutBatch& batch, const PolicyParams& snapshot);

/// Recomputes old log-probs and the KL snapshot at `snapshot` for one head.
void refresh_snapshot(LossBatch& batch, const PolicyParams& snapshot, Head head);

// ---------------------------------------------------------------------------
// Critic regression

struct CriticStats {
  double loss_before = 0.0;
  double loss_after = 0.0;
};

/// Minibatch regression of V toward targets. Keeps optimizer moments across
/// calls.
class CriticTrainer {
 public:
  CriticTrainer(const TrustRegionConfig& cfg, std::size_t parameter_count);
  CriticStats update(CriticParams& critic, const Matrix& states, const Vector& targets, Rng& rng);

 private:
  TrustRegionConfig cfg_;
  Vector m_, v_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Trust-region step

struct TrustRegionStats {
  bool accepted = false;
  bool aborted = false;  // non-finite gradient or curvature
  double loss_before = 0.0;
  double loss_after = 0.0;
  double kl = 0.0;
  double step_fraction = 0.0;
  int backtracks = 0;
  std::string diagnostic;
};

/// Problem seen by the generic solver. Losses are minimized.
struct TrustRegionProblem {
  Vector gradient;  // of the loss at the current point
  double loss = 0.0;
  std::function<Vector(const Vector&)> fisher;  // undamped Fisher-vector product
  /// (loss, mean KL) at current + step.
  std::function<std::pair<double, double>(const Vector&)> evaluate;
};

/// Solves F x = g by conjugate gradients.
Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b,
                          int iters, double tol = 1e-10);

/// Natural-gradient step with backtracking. On success `step` holds the
/// accepted parameter increment; otherwise it is zero.
TrustRegionStats solve_trust_region(const TrustRegionProblem& problem,
                                    const TrustRegionConfig& cfg, Vector& step);

/// One KL-constrained update of (trunk, head). The batch must carry the
/// old-policy snapshot of p.
TrustRegionStats trust_region_update(PolicyParams& p, const LossBatch& batch, Head head,
                                     const TrustRegionConfig& cfg);

// ---------------------------------------------------------------------------
// Training loop

struct UpdateRecord {
  int update = 0;
  int episodes_seen = 0;
  std::size_t transitions = 0;
  TrustRegionStats discrete;
  TrustRegionStats continuous;
  CriticStats critic;
};

struct CurveRecord {
  int episode = 0;
  EpisodeStats stats;
  double kl = 0.0;         // sum of the two heads' KL of the latest update
  double surrogate = 0.0;  // continuous-head surrogate after the latest update
};

struct TrainOptions {
  int episodes = 2000;
  ModelConfig model;
  std::optional<PolicyParams> initial_policy;
  std::optional<CriticParams> initial_critic;
  /// <= 0 derives the scale from the first batch.
  double reward_scale = 0.0;
  std::function<void(const CurveRecord&)> on_episode;
  std::function<void(const UpdateRecord&, const PolicyParams&, const CriticParams&)> on_update;
};

struct TrainResult {
  PolicyParams policy;
  CriticParams critic;
  double reward_scale = 1.0;
  std::vector<CurveRecord> curve;
  std::vector<UpdateRecord> updates;
};

/// Episodes per rollout window: ceil(D / T).
int episodes_per_update(const TrustRegionConfig& cfg, int horizon);

/// Scale giving O(1) critic targets: 1 / (mean |r| * min(T, 1 / (1 - gamma))).
double reward_scale_from(const RolloutBatch& batch, const TrustRegionConfig& cfg, int horizon);

TrainResult train_cadrl(const Environment& env, const TrustRegionConfig& cfg,
                        std::uint64_t seed, const TrainOptions& options);

}  // namespace suav
