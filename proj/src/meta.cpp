#include "suav/meta.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace suav {

void TaskDistribution::validate() const {
  if (min_sns < 1 || max_sns < min_sns) {
    throw std::invalid_argument("task distribution: need 1 <= min_sns <= max_sns");
  }
  if (!(area_side > 0.0)) throw std::invalid_argument("task distribution: area_side must be positive");
}

void MetaConfig::validate() const {
  if (meta_iters < 0 || tasks_per_iter < 1 || trajs_per_task < 1 || inner_steps < 0) {
    throw std::invalid_argument("meta: need meta_iters >= 0, I >= 1, K >= 1, inner_steps >= 0");
  }
  if (!(inner_lr >= 0.0)) throw std::invalid_argument("meta: inner_lr must be non-negative");
  outer.validate();
}

std::vector<Task> sample_tasks(const TaskDistribution& dist, std::size_t count, Rng& rng) {
  dist.validate();
  if (count < 1) throw std::invalid_argument("sample_tasks: count must be >= 1");
  std::vector<Task> tasks;
  tasks.reserve(count);
  const auto span = static_cast<std::size_t>(dist.max_sns - dist.min_sns + 1);
  for (std::size_t i = 0; i < count; ++i) {
    Task t;
    t.layout.dc_position = dist.dc_position;
    t.layout.area_side = dist.area_side;
    t.capacity = dist.capacity();
    const std::size_t n = static_cast<std::size_t>(dist.min_sns) + rng.uniform_index(span);
    for (std::size_t k = 0; k < n; ++k) {
      const double x = rng.uniform(0.0, dist.area_side);
      const double y = rng.uniform(0.0, dist.area_side);
      t.layout.sn_positions.push_back({x, y});
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

LossValue inner_loss(const PolicyParams& p, const LossBatch& batch, Head head, double normalizer) {
  if (!(normalizer > 0.0)) throw std::invalid_argument("inner_loss: normalizer must be positive");
  LossBatch b = batch;
  b.weight = 1.0 / normalizer;
  const LossKind kind =
      head == Head::discrete ? LossKind::reinforce_discrete : LossKind::reinforce_continuous;
  LossValue lv = evaluate_loss(kind, p, b);
  lv.value = -lv.value;
  lv.gradient = -lv.gradient;
  return lv;
}

namespace {

EpisodeStats mean_stats(const std::vector<EpisodeStats>& v) {
  EpisodeStats m;
  if (v.empty()) return m;
  for (const EpisodeStats& s : v) {
    m.episode_return += s.episode_return;
    m.avg_aoi += s.avg_aoi;
    m.avg_energy += s.avg_energy;
    m.cost += s.cost;
    m.exhausted_slots += s.exhausted_slots;
    m.restoring_slots += s.restoring_slots;
  }
  const double n = static_cast<double>(v.size());
  m.episode_return /= n;
  m.avg_aoi /= n;
  m.avg_energy /= n;
  m.cost /= n;
  return m;
}

// One plain gradient-ascent step on the summed per-head objectives.
void inner_step(PolicyParams& theta, const RolloutBatch& batch, double lr, double normalizer) {
  const LossBatch lb = to_loss_batch(batch, theta);
  const Vector g = inner_loss(theta, lb, Head::discrete, normalizer).gradient +
                   inner_loss(theta, lb, Head::continuous, normalizer).gradient;
  if (!g.allFinite()) {
    throw std::runtime_error("inner_adapt: non-finite gradient (norm " +
                             std::to_string(g.norm()) + ")");
  }
  unflatten(flatten(theta) + lr * g, theta);
}

ActorArchitecture meta_actor_arch(const TaskDistribution& d, const ModelConfig& m) {
  const int cap = static_cast<int>(d.capacity());
  return ActorArchitecture{5 * cap + 5, m.actor_width, m.actor_layers, 2 * (cap + 1), 2};
}

CriticArchitecture meta_critic_arch(const TaskDistribution& d, const ModelConfig& m) {
  const int cap = static_cast<int>(d.capacity());
  return CriticArchitecture{5 * cap + 5, m.critic_width, m.critic_layers};
}

}  // namespace

InnerResult inner_adapt(const PolicyParams& meta, const CriticParams& critic,
                        const Environment& env, const MetaConfig& cfg, double reward_scale,
                        Rng& rng, std::size_t task_id, int meta_version) {
  InnerResult r;
  r.adapted.params = meta;
  r.adapted.task_id = task_id;
  r.adapted.meta_version = meta_version;
  const double normalizer = static_cast<double>(cfg.trajs_per_task) * env.params().horizon;
  const int steps = std::max(cfg.inner_steps, 1);
  for (int s = 0; s < steps; ++s) {
    RolloutBatch batch;
    auto stats = collect_episodes(env, r.adapted.params, cfg.trajs_per_task, rng, batch);
    if (s == 0) r.stats = std::move(stats);
    prepare_batch(batch, critic, cfg.outer, reward_scale);
    if (cfg.inner_steps > 0 && cfg.inner_lr > 0.0) {
      inner_step(r.adapted.params, batch, cfg.inner_lr, normalizer);
    }
    r.train = std::move(batch);
  }
  r.adapted.inner_steps = cfg.inner_steps;
  return r;
}

MetaUpdateStats meta_update(PolicyParams& meta, std::vector<MetaTaskBatch>& tasks,
                            const TrustRegionConfig& cfg) {
  MetaUpdateStats out;
  if (tasks.empty()) return out;
  double total = 0.0;
  for (const MetaTaskBatch& t : tasks) total += static_cast<double>(t.validation.size());

  for (Head head : {Head::discrete, Head::continuous}) {
    if (head == Head::continuous) {
      for (MetaTaskBatch& t : tasks) refresh_snapshot(t.validation, t.adapted, Head::continuous);
    }
    const LossKind kind =
        head == Head::discrete ? LossKind::surrogate_discrete : LossKind::surrogate_continuous;

    TrustRegionProblem problem;
    problem.gradient = Vector::Zero(static_cast<Eigen::Index>(parameter_count(meta.arch)));
    std::vector<LossBatch> pooled_view;
    std::vector<Vector> thetas;
    for (MetaTaskBatch& t : tasks) {
      const LossValue lv = evaluate_loss(kind, t.adapted, t.validation);
      problem.gradient += lv.gradient;
      problem.loss += lv.value;
      LossBatch view = t.validation;
      view.weight = 1.0 / total;
      pooled_view.push_back(std::move(view));
      thetas.push_back(flatten(t.adapted));
    }
    std::vector<FisherOperator> fishers;
    fishers.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      fishers.emplace_back(tasks[i].adapted, pooled_view[i], head);
    }
    problem.fisher = [&](const Vector& v) {
      Vector acc = Vector::Zero(v.size());
      for (const FisherOperator& f : fishers) acc += f.apply(v, 0.0);
      return acc;
    };
    PolicyParams trial = meta;
    problem.evaluate = [&](const Vector& step) {
      double loss = 0.0, kl = 0.0;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        unflatten(thetas[i] + step, trial);
        loss += evaluate_loss(kind, trial, tasks[i].validation).value;
        kl += static_cast<double>(tasks[i].validation.size()) / total *
              mean_kl(trial, tasks[i].validation, head);
      }
      return std::pair{loss, kl};
    };

    Vector step;
    const TrustRegionStats st = solve_trust_region(problem, cfg, step);
    if (st.accepted) {
      unflatten(flatten(meta) + step, meta);
      for (std::size_t i = 0; i < tasks.size(); ++i) unflatten(thetas[i] + step, tasks[i].adapted);
    }
    (head == Head::discrete ? out.discrete : out.continuous) = st;
    out.pooled_kl += st.kl;
  }
  return out;
}

MetaResult meta_train(const TaskDistribution& dist, const ScenarioParams& scenario,
                      const MetaConfig& cfg, std::uint64_t seed, const MetaOptions& options) {
  dist.validate();
  cfg.validate();
  scenario.validate();
  Rng init_rng(derive_seed(seed, "init"));
  Rng critic_rng(derive_seed(seed, "critic"));

  MetaResult result;
  const ActorArchitecture arch = meta_actor_arch(dist, options.model);
  result.policy = options.initial_policy ? *options.initial_policy : init_policy(arch, init_rng);
  if (!(result.policy.arch == arch)) {
    throw std::invalid_argument("meta_train: initial policy architecture mismatch");
  }
  result.critic = init_critic(meta_critic_arch(dist, options.model), init_rng);
  if (cfg.meta_iters == 0) return result;

  CriticTrainer critic_trainer(cfg.outer, parameter_count(result.critic.arch));
  {
    // Reward scale from a few episodes of the initial policy on one task.
    Rng scale_rng(derive_seed(seed, "scale"));
    const Environment env(sample_tasks(dist, 1, scale_rng).front(), scenario);
    RolloutBatch probe;
    collect_episodes(env, result.policy, cfg.trajs_per_task, scale_rng, probe);
    result.reward_scale = reward_scale_from(probe, cfg.outer, scenario.horizon);
  }

  for (int it = 1; it <= cfg.meta_iters; ++it) {
    Rng task_rng(derive_seed(seed, "tasks", static_cast<std::uint64_t>(it)));
    const std::vector<Task> tasks =
        sample_tasks(dist, static_cast<std::size_t>(cfg.tasks_per_iter), task_rng);

    RolloutBatch pooled;
    std::vector<RolloutBatch> validation;
    std::vector<PolicyParams> adapted;
    std::vector<EpisodeStats> pre, post;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const Environment env(tasks[i], scenario);
      Rng rng(derive_seed(seed, "rollout",
                          static_cast<std::uint64_t>(it) * 4096u + static_cast<std::uint64_t>(i)));
      InnerResult inner = inner_adapt(result.policy, result.critic, env, cfg, result.reward_scale,
                                      rng, i, it);
      pre.insert(pre.end(), inner.stats.begin(), inner.stats.end());
      RolloutBatch val;
      const auto vs = collect_episodes(env, inner.adapted.params, cfg.trajs_per_task, rng, val);
      post.insert(post.end(), vs.begin(), vs.end());
      pooled.append(inner.train);
      validation.push_back(std::move(val));
      adapted.push_back(std::move(inner.adapted.params));
    }

    // Validation advantages are normalized over the pooled data.
    TrustRegionConfig raw = cfg.outer;
    raw.normalize_advantages = false;
    std::vector<double> all_adv;
    for (RolloutBatch& v : validation) {
      prepare_batch(v, result.critic, raw, result.reward_scale);
      all_adv.insert(all_adv.end(), v.advantages.begin(), v.advantages.end());
    }
    if (cfg.outer.normalize_advantages && all_adv.size() > 1) {
      const double n = static_cast<double>(all_adv.size());
      const double mean = std::accumulate(all_adv.begin(), all_adv.end(), 0.0) / n;
      double var = 0.0;
      for (double a : all_adv) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / n);
      for (RolloutBatch& v : validation) {
        for (double& a : v.advantages) a = (a - mean) / (sd + 1e-8);
      }
    }
    for (const RolloutBatch& v : validation) pooled.append(v);

    std::vector<MetaTaskBatch> batches;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      batches.push_back(MetaTaskBatch{adapted[i], to_loss_batch(validation[i], adapted[i])});
    }
    {
      const LossBatch critic_batch = to_loss_batch(pooled, result.policy);
      critic_trainer.update(result.critic, critic_batch.states, critic_batch.targets, critic_rng);
    }

    MetaCurveRecord rec;
    rec.iteration = it;
    rec.update = meta_update(result.policy, batches, cfg.outer);
    const EpisodeStats pre_mean = mean_stats(pre);
    const EpisodeStats post_mean = mean_stats(post);
    rec.pre_adapt_return = pre_mean.episode_return;
    rec.post_adapt_return = post_mean.episode_return;
    rec.post_adapt_aoi = post_mean.avg_aoi;
    rec.post_adapt_energy = post_mean.avg_energy;
    result.curve.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
  }
  return result;
}

AdaptationResult adapt_to_new_task(const PolicyParams& meta, const CriticParams& critic,
                                   const Environment& env, int steps, const MetaConfig& cfg,
                                   double reward_scale, Rng& rng) {
  if (steps < 0) throw std::invalid_argument("adapt_to_new_task: negative step count");
  AdaptationResult r;
  r.adapted.params = meta;
  const double normalizer = static_cast<double>(cfg.trajs_per_task) * env.params().horizon;
  for (int s = 0; s <= steps; ++s) {
    RolloutBatch batch;
    const auto stats = collect_episodes(env, r.adapted.params, cfg.trajs_per_task, rng, batch);
    r.curve.push_back(AdaptationRecord{s, mean_stats(stats)});
    if (s == steps) break;
    prepare_batch(batch, critic, cfg.outer, reward_scale);
    inner_step(r.adapted.params, batch, cfg.inner_lr, normalizer);
    r.adapted.inner_steps = s + 1;
  }
  return r;
}

}  // namespace suav
