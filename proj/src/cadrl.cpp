#include "suav/cadrl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace suav {

void TrustRegionConfig::validate() const {
  if (!(max_kl > 0.0)) throw std::invalid_argument("trust region: max_kl must be positive");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0 && discount >= 0.0 && discount <= 1.0)) {
    throw std::invalid_argument("trust region: lambda and gamma must lie in [0, 1]");
  }
  if (cg_iters < 1 || backtrack_steps < 1 || !(backtrack_coef > 0.0 && backtrack_coef < 1.0)) {
    throw std::invalid_argument("trust region: invalid solver settings");
  }
  if (!(cg_damping >= 0.0) || !(accept_kl_factor >= 1.0)) {
    throw std::invalid_argument("trust region: invalid damping or acceptance factor");
  }
  if (!(critic_lr > 0.0) || critic_epochs < 0 || critic_minibatch < 1) {
    throw std::invalid_argument("trust region: invalid critic settings");
  }
  if (critic_optimizer != "adam" && critic_optimizer != "sgd") {
    throw std::invalid_argument("trust region: critic_optimizer must be adam or sgd");
  }
  if (rollout_transitions < 1) throw std::invalid_argument("trust region: empty rollout window");
}

ActorArchitecture actor_architecture(const Environment& env, const ModelConfig& m) {
  return ActorArchitecture{static_cast<int>(env.state_dim()), m.actor_width, m.actor_layers,
                           static_cast<int>(env.discrete_dim()), 2};
}

CriticArchitecture critic_architecture(const Environment& env, const ModelConfig& m) {
  return CriticArchitecture{static_cast<int>(env.state_dim()), m.critic_width, m.critic_layers};
}

void RolloutBatch::append(const RolloutBatch& o) {
  if (size() == 0 && state_dim == 0) {
    state_dim = o.state_dim;
    discrete_dim = o.discrete_dim;
  }
  if (o.size() > 0 && (o.state_dim != state_dim || o.discrete_dim != discrete_dim)) {
    throw std::invalid_argument("RolloutBatch::append: dimension mismatch");
  }
  const auto cat = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  cat(states, o.states);
  cat(masks, o.masks);
  cat(discrete, o.discrete);
  cat(raw_speed, o.raw_speed);
  cat(raw_turn, o.raw_turn);
  cat(rewards, o.rewards);
  cat(logp_discrete, o.logp_discrete);
  cat(logp_continuous, o.logp_continuous);
  cat(dones, o.dones);
  cat(values, o.values);
  cat(advantages, o.advantages);
  cat(targets, o.targets);
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
    double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("compute_gae: values must have length rewards + 1");
  }
  const std::size_t n = rewards.size();
  std::vector<double> adv(n), targets(n);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double td = rewards[k] + gamma * values[k + 1] - values[k];
    running = td + gamma * lambda * running;
    adv[k] = running;
    targets[k] = running + values[k];
  }
  return {std::move(adv), std::move(targets)};
}

std::vector<EpisodeStats> collect_episodes(const Environment& env, const PolicyParams& policy,
                                           int episodes, Rng& rng, RolloutBatch& out) {
  const std::size_t dim = env.state_dim();
  const auto& mask = env.action_mask();
  if (out.size() == 0 && out.state_dim == 0) {
    out.state_dim = dim;
    out.discrete_dim = mask.size();
  }
  if (out.state_dim != dim || out.discrete_dim != mask.size()) {
    throw std::invalid_argument("collect_episodes: batch dimensions differ from the environment");
  }
  const int horizon = env.params().horizon;
  const double n_sns = static_cast<double>(env.n_sns());
  std::vector<EpisodeStats> stats;
  std::vector<double> s(dim);
  for (int ep = 0; ep < episodes; ++ep) {
    EpisodeStats st;
    EnvState state = env.reset();
    for (int t = 0; t < horizon; ++t) {
      env.encode_state(state, s.data());
      const SampledAction a = sample_action(policy, s, mask, rng);
      const StepOutcome o = env.step(state, env.decode(a.action, state), rng);
      out.states.insert(out.states.end(), s.begin(), s.end());
      out.masks.insert(out.masks.end(), mask.begin(), mask.end());
      out.discrete.push_back(a.action.discrete);
      out.raw_speed.push_back(a.action.raw_speed);
      out.raw_turn.push_back(a.action.raw_turn);
      out.rewards.push_back(o.reward);
      out.logp_discrete.push_back(a.logp.discrete);
      out.logp_continuous.push_back(a.logp.continuous);
      out.dones.push_back(t + 1 == horizon ? 1 : 0);

      st.episode_return += o.reward;
      st.avg_aoi += std::accumulate(o.next_state.freshness.aoi.begin(),
                                    o.next_state.freshness.aoi.end(), 0.0) / n_sns;
      st.avg_energy += o.events.consumed;
      st.exhausted_slots += o.events.energy_exhausted ? 1 : 0;
      st.restoring_slots += o.events.mode == Mode::restoring ? 1 : 0;
      state = o.next_state;
    }
    st.avg_aoi /= horizon;
    st.avg_energy /= horizon;
    st.cost = -st.episode_return;
    stats.push_back(st);
  }
  return stats;
}

namespace {

Matrix states_matrix(const RolloutBatch& b) {
  return Eigen::Map<const Matrix>(b.states.data(), static_cast<Eigen::Index>(b.state_dim),
                                  static_cast<Eigen::Index>(b.size()));
}

}  // namespace

void prepare_batch(RolloutBatch& batch, const CriticParams& critic, const TrustRegionConfig& cfg,
                   double reward_scale) {
  const std::size_t n = batch.size();
  const Vector v = n ? critic_forward(critic, states_matrix(batch)) : Vector();
  batch.values.assign(v.data(), v.data() + v.size());
  batch.advantages.assign(n, 0.0);
  batch.targets.assign(n, 0.0);

  std::size_t begin = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!batch.dones[i] && i + 1 < n) continue;
    std::vector<double> r(batch.rewards.begin() + static_cast<long>(begin),
                          batch.rewards.begin() + static_cast<long>(i + 1));
    for (double& x : r) x *= reward_scale;
    std::vector<double> vals(batch.values.begin() + static_cast<long>(begin),
                             batch.values.begin() + static_cast<long>(i + 1));
    // Terminal bootstrap is zero; an unfinished tail bootstraps on its last value.
    vals.push_back(batch.dones[i] ? 0.0 : vals.back());
    auto [adv, tgt] = compute_gae(r, vals, cfg.discount, cfg.gae_lambda);
    std::copy(adv.begin(), adv.end(), batch.advantages.begin() + static_cast<long>(begin));
    std::copy(tgt.begin(), tgt.end(), batch.targets.begin() + static_cast<long>(begin));
    begin = i + 1;
  }

  if (cfg.normalize_advantages && n > 1) {
    const double mean = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) /
                        static_cast<double>(n);
    double var = 0.0;
    for (double a : batch.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (double& a : batch.advantages) a = (a - mean) / (sd + 1e-8);
  }
}

LossBatch to_loss_batch(const RolloutBatch& b, const PolicyParams& snapshot) {
  const auto n = static_cast<Eigen::Index>(b.size());
  LossBatch lb;
  lb.states = states_matrix(b);
  lb.discrete = b.discrete;
  lb.continuous = Matrix(2, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    lb.continuous(0, j) = b.raw_speed[static_cast<std::size_t>(j)];
    lb.continuous(1, j) = b.raw_turn[static_cast<std::size_t>(j)];
  }
  lb.advantages = Eigen::Map<const Vector>(b.advantages.data(), n);
  lb.old_logp_discrete = Eigen::Map<const Vector>(b.logp_discrete.data(), n);
  lb.old_logp_continuous = Eigen::Map<const Vector>(b.logp_continuous.data(), n);
  lb.targets = Eigen::Map<const Vector>(b.targets.data(), n);
  lb.mask = Matrix(static_cast<Eigen::Index>(b.discrete_dim), n);
  for (std::size_t i = 0; i < b.masks.size(); ++i) lb.mask.data()[i] = b.masks[i];
  const ActorOutput old = actor_forward(snapshot, lb.states);
  lb.old_logits = old.logits;
  lb.old_mean = old.mean;
  lb.old_log_std = old.log_std;
  return lb;
}

void refresh_snapshot(LossBatch& batch, const PolicyParams& snapshot, Head head) {
  const ActorOutput old = actor_forward(snapshot, batch.states);
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (head == Head::discrete) {
    batch.old_logits = old.logits;
    const Matrix logp = masked_log_softmax(old.logits, batch.mask);
    for (Eigen::Index j = 0; j < n; ++j) {
      batch.old_logp_discrete(j) = logp(static_cast<Eigen::Index>(batch.discrete[j]), j);
    }
  } else {
    batch.old_mean = old.mean;
    batch.old_log_std = old.log_std;
    batch.old_logp_continuous = gaussian_log_prob(batch.continuous, old.mean, old.log_std);
  }
}

// ---------------------------------------------------------------------------

CriticTrainer::CriticTrainer(const TrustRegionConfig& cfg, std::size_t parameter_count)
    : cfg_(cfg),
      m_(Vector::Zero(static_cast<Eigen::Index>(parameter_count))),
      v_(Vector::Zero(static_cast<Eigen::Index>(parameter_count))) {}

CriticStats CriticTrainer::update(CriticParams& critic, const Matrix& states,
                                  const Vector& targets, Rng& rng) {
  LossBatch full;
  full.states = states;
  full.targets = targets;
  CriticStats stats;
  stats.loss_before = evaluate_loss(LossKind::critic_mse, critic, full).value;
  const auto n = static_cast<std::size_t>(states.cols());
  if (n == 0) return stats;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Vector theta = flatten(critic);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  LossBatch mb;
  for (int epoch = 0; epoch < cfg_.critic_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t start = 0; start < n; start += cfg_.critic_minibatch) {
      const std::size_t len = std::min(cfg_.critic_minibatch, n - start);
      mb.states.resize(states.rows(), static_cast<Eigen::Index>(len));
      mb.targets.resize(static_cast<Eigen::Index>(len));
      for (std::size_t k = 0; k < len; ++k) {
        const auto src = static_cast<Eigen::Index>(order[start + k]);
        mb.states.col(static_cast<Eigen::Index>(k)) = states.col(src);
        mb.targets(static_cast<Eigen::Index>(k)) = targets(src);
      }
      const Vector g = evaluate_loss(LossKind::critic_mse, critic, mb).gradient;
      if (!g.allFinite()) continue;
      if (cfg_.critic_optimizer == "sgd") {
        theta -= cfg_.critic_lr * g;
      } else {
        ++step_;
        m_ = b1 * m_ + (1 - b1) * g;
        v_ = b2 * v_ + (1 - b2) * g.cwiseAbs2();
        const double c1 = 1 - std::pow(b1, static_cast<double>(step_));
        const double c2 = 1 - std::pow(b2, static_cast<double>(step_));
        theta.array() -= cfg_.critic_lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
      }
      unflatten(theta, critic);
    }
  }
  stats.loss_after = evaluate_loss(LossKind::critic_mse, critic, full).value;
  return stats;
}

// ---------------------------------------------------------------------------

Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b,
                          int iters, double tol) {
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int i = 0; i < iters && rr > tol; ++i) {
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return x;
}

TrustRegionStats solve_trust_region(const TrustRegionProblem& problem,
                                    const TrustRegionConfig& cfg, Vector& step) {
  TrustRegionStats st;
  st.loss_before = problem.loss;
  st.loss_after = problem.loss;
  step = Vector::Zero(problem.gradient.size());
  if (!problem.gradient.allFinite() || !std::isfinite(problem.loss)) {
    st.aborted = true;
    st.diagnostic = "non-finite gradient";
    return st;
  }
  if (problem.gradient.squaredNorm() == 0.0) {
    st.diagnostic = "zero gradient";
    return st;
  }
  const auto damped = [&](const Vector& v) {
    return Vector(problem.fisher(v) + cfg.cg_damping * v);
  };
  const Vector x = conjugate_gradient(damped, problem.gradient, cfg.cg_iters);
  const double xfx = x.dot(damped(x));
  if (!std::isfinite(xfx) || !(xfx > 0.0) || !x.allFinite()) {
    st.aborted = true;
    st.diagnostic = "non-positive or non-finite curvature";
    return st;
  }
  const Vector full = -std::sqrt(2.0 * cfg.max_kl / xfx) * x;
  double frac = 1.0;
  for (int k = 0; k < cfg.backtrack_steps; ++k, frac *= cfg.backtrack_coef) {
    const Vector candidate = frac * full;
    const auto [loss, kl] = problem.evaluate(candidate);
    st.backtracks = k;
    if (std::isfinite(loss) && std::isfinite(kl) && loss < problem.loss &&
        kl <= cfg.accept_kl_factor * cfg.max_kl) {
      st.accepted = true;
      st.loss_after = loss;
      st.kl = kl;
      st.step_fraction = frac;
      step = candidate;
      return st;
    }
  }
  st.diagnostic = "line search exhausted";
  return st;
}

TrustRegionStats trust_region_update(PolicyParams& p, const LossBatch& batch, Head head,
                                     const TrustRegionConfig& cfg) {
  const LossKind kind =
      head == Head::discrete ? LossKind::surrogate_discrete : LossKind::surrogate_continuous;
  const LossValue lv = evaluate_loss(kind, p, batch);
  const FisherOperator fisher(p, batch, head);
  const Vector theta = flatten(p);
  PolicyParams trial = p;

  TrustRegionProblem problem;
  problem.gradient = lv.gradient;
  problem.loss = lv.value;
  problem.fisher = [&](const Vector& v) { return fisher.apply(v, 0.0); };
  problem.evaluate = [&](const Vector& step) {
    unflatten(theta + step, trial);
    return std::pair{evaluate_loss(kind, trial, batch).value, mean_kl(trial, batch, head)};
  };
  Vector step;
  const TrustRegionStats st = solve_trust_region(problem, cfg, step);
  if (st.accepted) unflatten(theta + step, p);
  return st;
}

// ---------------------------------------------------------------------------

int episodes_per_update(const TrustRegionConfig& cfg, int horizon) {
  const auto t = static_cast<std::size_t>(horizon);
  return static_cast<int>((cfg.rollout_transitions + t - 1) / t);
}

double reward_scale_from(const RolloutBatch& batch, const TrustRegionConfig& cfg, int horizon) {
  if (batch.size() == 0) return 1.0;
  double mean_abs = 0.0;
  for (double r : batch.rewards) mean_abs += std::abs(r);
  mean_abs /= static_cast<double>(batch.size());
  if (!(mean_abs > 0.0)) return 1.0;
  double effective = static_cast<double>(horizon);
  if (cfg.discount < 1.0) effective = std::min(effective, 1.0 / (1.0 - cfg.discount));
  return 1.0 / (mean_abs * effective);
}

TrainResult train_cadrl(const Environment& env, const TrustRegionConfig& cfg,
                        std::uint64_t seed, const TrainOptions& options) {
  cfg.validate();
  if (options.episodes < 0) throw std::invalid_argument("train_cadrl: negative episode count");
  Rng init_rng(derive_seed(seed, "init"));
  Rng rollout_rng(derive_seed(seed, "rollout"));
  Rng critic_rng(derive_seed(seed, "critic"));

  TrainResult result;
  const ActorArchitecture arch = actor_architecture(env, options.model);
  result.policy = options.initial_policy ? *options.initial_policy : init_policy(arch, init_rng);
  if (!(result.policy.arch == arch)) {
    throw std::invalid_argument("train_cadrl: initial policy architecture does not match the task");
  }
  const CriticArchitecture carch = critic_architecture(env, options.model);
  result.critic = options.initial_critic ? *options.initial_critic : init_critic(carch, init_rng);
  if (!(result.critic.arch == carch)) {
    throw std::invalid_argument("train_cadrl: initial critic architecture does not match the task");
  }
  result.reward_scale = options.reward_scale;
  CriticTrainer critic_trainer(cfg, parameter_count(result.critic.arch));

  const int per_update = episodes_per_update(cfg, env.params().horizon);
  int episode = 0;
  double last_kl = 0.0, last_surrogate = 0.0;
  while (episode < options.episodes) {
    const int count = std::min(per_update, options.episodes - episode);
    RolloutBatch batch;
    const auto stats = collect_episodes(env, result.policy, count, rollout_rng, batch);
    for (const EpisodeStats& s : stats) {
      CurveRecord rec{++episode, s, last_kl, last_surrogate};
      result.curve.push_back(rec);
      if (options.on_episode) options.on_episode(rec);
    }
    if (!(result.reward_scale > 0.0)) {
      result.reward_scale = reward_scale_from(batch, cfg, env.params().horizon);
    }
    prepare_batch(batch, result.critic, cfg, result.reward_scale);

    UpdateRecord up;
    up.update = static_cast<int>(result.updates.size()) + 1;
    up.episodes_seen = episode;
    up.transitions = batch.size();
    LossBatch lb = to_loss_batch(batch, result.policy);
    up.critic = critic_trainer.update(result.critic, lb.states, lb.targets, critic_rng);
    up.discrete = trust_region_update(result.policy, lb, Head::discrete, cfg);
    refresh_snapshot(lb, result.policy, Head::continuous);
    up.continuous = trust_region_update(result.policy, lb, Head::continuous, cfg);
    last_kl = up.discrete.kl + up.continuous.kl;
    last_surrogate = up.continuous.loss_after;
    result.updates.push_back(up);
    if (options.on_update) options.on_update(up, result.policy, result.critic);
  }
  return result;
}

}  // namespace suav
