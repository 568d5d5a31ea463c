#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "suav/env.hpp"
#include "suav/random.hpp"

namespace suav {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Flat gradient aligned with flatten(params).
using FlatGradient = Vector;

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct ActorArchitecture {
  int input_dim = 0;
  int hidden_width = 256;
  int hidden_layers = 3;
  int discrete_dim = 0;
  int continuous_dim = 2;

  friend bool operator==(const ActorArchitecture&, const ActorArchitecture&) = default;
};

struct CriticArchitecture {
  int input_dim = 0;
  int hidden_width = 256;
  int hidden_layers = 2;

  friend bool operator==(const CriticArchitecture&, const CriticArchitecture&) = default;
};

/// Shared trunk, categorical head (logits) and Gaussian head (means plus
/// state-independent log-std).
///
/// Flattening order: every trunk layer as (weight column-major, bias), then
/// the discrete head, then the mean head, then log_std.
struct PolicyParams {
  ActorArchitecture arch;
  std::vector<Dense> trunk;
  Dense discrete_head;
  Dense mean_head;
  Vector log_std;
};

/// Flattening order: hidden layers as (weight column-major, bias), then the
/// scalar output layer.
struct CriticParams {
  CriticArchitecture arch;
  std::vector<Dense> hidden;
  Dense out;
};

enum class Head { discrete, continuous };

/// Half-open index ranges of each parameter group in the flat vector.
struct PolicyLayout {
  std::size_t trunk_end = 0;     // trunk occupies [0, trunk_end)
  std::size_t discrete_end = 0;  // discrete head [trunk_end, discrete_end)
  std::size_t mean_end = 0;      // mean head [discrete_end, mean_end)
  std::size_t total = 0;         // log_std [mean_end, total)
};

PolicyLayout policy_layout(const ActorArchitecture& arch);
std::size_t parameter_count(const ActorArchitecture& arch);
std::size_t parameter_count(const CriticArchitecture& arch);

/// 1 on the trunk and the selected head, 0 elsewhere.
Vector head_mask(const ActorArchitecture& arch, Head head);

/// Orthogonal hidden layers (gain sqrt 2), near-zero heads, log-std 0.
PolicyParams init_policy(const ActorArchitecture& arch, Rng& rng);
/// Orthogonal hidden layers, unit-gain output layer.
CriticParams init_critic(const CriticArchitecture& arch, Rng& rng);

Vector flatten(const PolicyParams& p);
Vector flatten(const CriticParams& c);
void unflatten(const Vector& flat, PolicyParams& p);
void unflatten(const Vector& flat, CriticParams& c);

// ---------------------------------------------------------------------------
// Evaluation

struct ActorOutput {
  Matrix logits;   // discrete_dim x batch
  Matrix mean;     // continuous_dim x batch
  Vector log_std;  // continuous_dim, clamped to [kLogStdMin, kLogStdMax]
};

/// Intermediate activations kept for backward and Jacobian-vector passes.
struct ActorTape {
  std::vector<Matrix> activations;  // input, then each post-ReLU trunk layer
};

struct CriticTape {
  std::vector<Matrix> activations;
};

/// States are stored column-wise. Throws on an input-dimension mismatch.
ActorOutput actor_forward(const PolicyParams& p, const Matrix& states,
                          ActorTape* tape = nullptr);

/// Backpropagates output cotangents into a flat gradient. d_log_std is the
/// cotangent of the clamped log-std; clamped entries receive zero gradient.
FlatGradient actor_backward(const PolicyParams& p, const ActorTape& tape,
                            const Matrix& d_logits, const Matrix& d_mean,
                            const Vector& d_log_std);

/// Directional derivative of the outputs along a flat parameter direction.
ActorOutput actor_jvp(const PolicyParams& p, const ActorTape& tape,
                      const Vector& direction);

Vector critic_forward(const CriticParams& c, const Matrix& states,
                      CriticTape* tape = nullptr);
double critic_forward(const CriticParams& c, std::span<const double> state);
FlatGradient critic_backward(const CriticParams& c, const CriticTape& tape,
                             const Vector& d_value);

/// Log-softmax over the entries with mask != 0; masked entries get -inf.
/// An empty mask means every action is valid.
Matrix masked_log_softmax(const Matrix& logits, const Matrix& mask);

/// Diagonal-Gaussian log-density of pre-squash actions, per column.
Vector gaussian_log_prob(const Matrix& actions, const Matrix& mean,
                         const Vector& log_std);

struct LogProbs {
  double discrete = 0.0;
  double continuous = 0.0;
};

LogProbs log_prob(const PolicyParams& p, std::span<const double> state,
                  const PolicyAction& action,
                  std::span<const std::uint8_t> mask = {});

struct SampledAction {
  PolicyAction action;
  LogProbs logp;
};

/// Discrete index ~ softmax over valid logits; continuous ~ N(mean, std).
SampledAction sample_action(const PolicyParams& p, std::span<const double> state,
                            std::span<const std::uint8_t> mask, Rng& rng);

/// Most likely discrete index and the Gaussian mean.
PolicyAction greedy_action(const PolicyParams& p, std::span<const double> state,
                           std::span<const std::uint8_t> mask);

// ---------------------------------------------------------------------------
// Registered losses

enum class LossKind {
  constant,              // 1, zero gradient
  quadratic_probe,       // ||theta||^2 / 2
  surrogate_discrete,    // -w sum ratio_d * A
  surrogate_continuous,  // -w sum ratio_c * A
  reinforce_discrete,    // -w sum log pi_d * A
  reinforce_continuous,  // -w sum log pi_c * A
  kl_discrete,           // w sum KL(old || new), categorical
  kl_continuous,         // w sum KL(old || new), Gaussian
  critic_mse,            // w sum (target - V)^2
};

const char* loss_name(LossKind kind);
bool is_actor_loss(LossKind kind);

/// Data consumed by the registered losses. Columns index samples. Fields not
/// used by a given loss may be left empty.
struct LossBatch {
  Matrix states;
  std::vector<std::size_t> discrete;
  Matrix continuous;  // pre-squash actions
  Vector advantages;
  Vector old_logp_discrete;
  Vector old_logp_continuous;
  Matrix old_logits;  // old-policy snapshot for KL
  Matrix old_mean;
  Vector old_log_std;
  Matrix mask;        // discrete_dim x batch, empty = all valid
  Vector targets;     // critic regression targets
  /// Per-sample weight; <= 0 means 1 / batch size.
  double weight = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
  double sample_weight() const;
};

struct LossValue {
  double value = 0.0;
  FlatGradient gradient;
};

/// Value and exact gradient of a registered actor loss. Throws
/// std::invalid_argument for critic-only or unknown loss kinds.
LossValue evaluate_loss(LossKind kind, const PolicyParams& p, const LossBatch& batch);
/// Value and exact gradient of a registered critic loss.
LossValue evaluate_loss(LossKind kind, const CriticParams& c, const LossBatch& batch);

FlatGradient gradient(LossKind kind, const PolicyParams& p, const LossBatch& batch);
FlatGradient gradient(LossKind kind, const CriticParams& c, const LossBatch& batch);

/// Fisher-vector product of one head's policy at p (equal to the Hessian of
/// the mean KL at the snapshot), plus damping * v. Only trunk and the given
/// head are involved; other entries of the result are zero.
Vector fisher_vector_product(const PolicyParams& p, const LossBatch& batch, Head head,
                             const Vector& v, double damping);

/// Cached forward pass used to amortize repeated Fisher products.
class FisherOperator {
 public:
  FisherOperator(const PolicyParams& p, const LossBatch& batch, Head head);
  Vector apply(const Vector& v, double damping) const;

 private:
  const PolicyParams& params_;
  Head head_;
  double weight_;
  ActorTape tape_;
  Matrix probs_;
  Vector inv_var_;
  Vector head_mask_;
};

/// Mean KL(old || new) for a head over a batch holding an old snapshot.
double mean_kl(const PolicyParams& p, const LossBatch& batch, Head head);

}  // namespace suav
