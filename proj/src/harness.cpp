#include "suav/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace suav {

using nlohmann::json;

ExperimentConfig::ExperimentConfig() {
  scenario.horizon = 50;
  meta.meta_iters = 300;
  meta.tasks_per_iter = 4;
  meta.trajs_per_task = 3;
}

namespace {

// Reads the keys of one JSON object and rejects anything it did not consume.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw std::invalid_argument("config: " + where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!obj_.contains(key)) return;
    used_.insert(key);
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value for " + where() + key);
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const json& child(const char* key) {
    used_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!used_.count(k)) throw std::invalid_argument("config: unknown key " + where() + k);
    }
  }

  std::string sub(const char* key) const { return where() + key; }

 private:
  std::string where() const { return path_.empty() ? "" : path_ + "."; }
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

double to_db(double linear) { return 10.0 * std::log10(linear); }

json vec2_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec2_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw std::invalid_argument("config: " + what + " must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json trust_json(const TrustRegionConfig& t) {
  return {{"max_kl", t.max_kl},
          {"gae_lambda", t.gae_lambda},
          {"discount", t.discount},
          {"cg_iters", t.cg_iters},
          {"cg_damping", t.cg_damping},
          {"backtrack_steps", t.backtrack_steps},
          {"backtrack_coef", t.backtrack_coef},
          {"accept_kl_factor", t.accept_kl_factor},
          {"critic_lr", t.critic_lr},
          {"critic_epochs", t.critic_epochs},
          {"critic_minibatch", t.critic_minibatch},
          {"critic_optimizer", t.critic_optimizer},
          {"normalize_advantages", t.normalize_advantages},
          {"rollout_transitions", t.rollout_transitions}};
}

void read_trust(Reader r, TrustRegionConfig& t) {
  r.get("max_kl", t.max_kl);
  r.get("gae_lambda", t.gae_lambda);
  r.get("discount", t.discount);
  r.get("cg_iters", t.cg_iters);
  r.get("cg_damping", t.cg_damping);
  r.get("backtrack_steps", t.backtrack_steps);
  r.get("backtrack_coef", t.backtrack_coef);
  r.get("accept_kl_factor", t.accept_kl_factor);
  r.get("critic_lr", t.critic_lr);
  r.get("critic_epochs", t.critic_epochs);
  r.get("critic_minibatch", t.critic_minibatch);
  r.get("critic_optimizer", t.critic_optimizer);
  r.get("normalize_advantages", t.normalize_advantages);
  r.get("rollout_transitions", t.rollout_transitions);
  r.finish();
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  const ScenarioParams& s = c.scenario;
  json j;
  j["scenario"] = {
      {"horizon", s.horizon},
      {"altitude", s.altitude},
      {"arrival_rate", s.arrival_rate},
      {"packet_bits", s.packet_bits},
      {"schedule_seconds", s.schedule_seconds},
      {"aoi_weight", s.aoi_weight},
      {"energy_weight", s.energy_weight},
      {"initial_aoi", s.initial_aoi},
      {"kinematics",
       {{"max_speed", s.kinematics.max_speed},
        {"max_turn", s.kinematics.max_turn},
        {"slot_seconds", s.kinematics.slot_seconds}}},
      {"channel",
       {{"beta", s.channel.beta},
        {"beta_prime", s.channel.beta_prime},
        {"beta0_db", to_db(s.channel.beta0)},
        {"kappa", s.channel.kappa},
        {"path_loss_exp", s.channel.path_loss_exp},
        {"noise_power_dbm", to_db(s.channel.noise_power) + 30.0},
        {"sn_tx_power", s.channel.sn_tx_power},
        {"uav_tx_power", s.channel.uav_tx_power},
        {"bandwidth", s.channel.bandwidth},
        {"snr_threshold_db", to_db(s.channel.snr_threshold)}}},
      {"power",
       {{"n_rotors", s.power.n_rotors},
        {"blade_drag_chi", s.power.blade_drag_chi},
        {"thrust_coef_xT", s.power.thrust_coef_xT},
        {"rotor_solidity_xs", s.power.rotor_solidity_xs},
        {"induced_corr_xf", s.power.induced_corr_xf},
        {"air_density_rho", s.power.air_density_rho},
        {"disc_area_A", s.power.disc_area_A},
        {"fuselage_drag_d0", s.power.fuselage_drag_d0},
        {"flat_plate_SFA", s.power.flat_plate_SFA},
        {"mass_M", s.power.mass_M},
        {"gravity_g", s.power.gravity_g},
        {"comm_power", s.power.comm_power}}},
      {"harvest",
       {{"arrival_prob", s.harvest.arrival_prob},
        {"conv_eff", s.harvest.conv_eff},
        {"panel_area", s.harvest.panel_area},
        {"ground_irradiance", s.harvest.ground_irradiance},
        {"transmittance_max", s.harvest.transmittance_max},
        {"extinction", s.harvest.extinction},
        {"scale_height", s.harvest.scale_height}}},
      {"battery",
       {{"capacity", s.battery.capacity},
        {"restore_threshold", s.battery.restore_threshold},
        {"resume_threshold", s.battery.resume_threshold},
        {"initial_level", s.battery.initial_level}}}};

  json positions = json::array();
  for (const Vec2& p : c.layout.positions) positions.push_back(vec2_json(p));
  j["layout"] = {{"n_sns", c.layout.n_sns},
                 {"seed", c.layout.seed},
                 {"positions", positions},
                 {"dc_position", vec2_json(c.layout.dc_position)},
                 {"area_side", c.layout.area_side},
                 {"capacity", c.layout.capacity}};
  j["trust"] = trust_json(c.trust);
  j["model"] = {{"actor_width", c.model.actor_width},
                {"actor_layers", c.model.actor_layers},
                {"critic_width", c.model.critic_width},
                {"critic_layers", c.model.critic_layers}};
  j["meta"] = {{"meta_iters", c.meta.meta_iters},
               {"tasks_per_iter", c.meta.tasks_per_iter},
               {"trajs_per_task", c.meta.trajs_per_task},
               {"inner_lr", c.meta.inner_lr},
               {"inner_steps", c.meta.inner_steps},
               {"outer", trust_json(c.meta.outer)}};
  j["tasks"] = {{"min_sns", c.tasks.min_sns},
                {"max_sns", c.tasks.max_sns},
                {"area_side", c.tasks.area_side},
                {"dc_position", vec2_json(c.tasks.dc_position)}};
  j["episodes"] = c.episodes;
  j["eval_episodes"] = c.eval_episodes;
  j["eval_greedy"] = c.eval_greedy;
  j["policy"] = c.policy;
  j["adapt_steps"] = c.adapt_steps;
  j["adapt_mode"] = c.adapt_mode;
  j["sweep"] = {{"n_sns", c.sweep.n_sns},
                {"arrival_rate", c.sweep.arrival_rate},
                {"harvest_prob", c.sweep.harvest_prob}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader top(j, "");
  if (top.has("scenario")) {
    Reader r(top.child("scenario"), "scenario");
    ScenarioParams& s = c.scenario;
    r.get("horizon", s.horizon);
    r.get("altitude", s.altitude);
    r.get("arrival_rate", s.arrival_rate);
    r.get("packet_bits", s.packet_bits);
    r.get("schedule_seconds", s.schedule_seconds);
    r.get("aoi_weight", s.aoi_weight);
    r.get("energy_weight", s.energy_weight);
    r.get("initial_aoi", s.initial_aoi);
    if (r.has("kinematics")) {
      Reader k(r.child("kinematics"), r.sub("kinematics"));
      k.get("max_speed", s.kinematics.max_speed);
      k.get("max_turn", s.kinematics.max_turn);
      k.get("slot_seconds", s.kinematics.slot_seconds);
      k.finish();
    }
    if (r.has("channel")) {
      Reader ch(r.child("channel"), r.sub("channel"));
      ChannelParams& p = s.channel;
      ch.get("beta", p.beta);
      ch.get("beta_prime", p.beta_prime);
      ch.get("kappa", p.kappa);
      ch.get("path_loss_exp", p.path_loss_exp);
      ch.get("sn_tx_power", p.sn_tx_power);
      ch.get("uav_tx_power", p.uav_tx_power);
      ch.get("bandwidth", p.bandwidth);
      double db = 0.0;
      if (ch.has("beta0_db")) {
        ch.get("beta0_db", db);
        p.beta0 = db_to_linear(db);
      }
      if (ch.has("noise_power_dbm")) {
        ch.get("noise_power_dbm", db);
        p.noise_power = dbm_to_watts(db);
      }
      if (ch.has("snr_threshold_db")) {
        ch.get("snr_threshold_db", db);
        p.snr_threshold = db_to_linear(db);
      }
      ch.finish();
    }
    if (r.has("power")) {
      Reader pw(r.child("power"), r.sub("power"));
      PowerParams& p = s.power;
      pw.get("n_rotors", p.n_rotors);
      pw.get("blade_drag_chi", p.blade_drag_chi);
      pw.get("thrust_coef_xT", p.thrust_coef_xT);
      pw.get("rotor_solidity_xs", p.rotor_solidity_xs);
      pw.get("induced_corr_xf", p.induced_corr_xf);
      pw.get("air_density_rho", p.air_density_rho);
      pw.get("disc_area_A", p.disc_area_A);
      pw.get("fuselage_drag_d0", p.fuselage_drag_d0);
      pw.get("flat_plate_SFA", p.flat_plate_SFA);
      pw.get("mass_M", p.mass_M);
      pw.get("gravity_g", p.gravity_g);
      pw.get("comm_power", p.comm_power);
      pw.finish();
    }
    if (r.has("harvest")) {
      Reader h(r.child("harvest"), r.sub("harvest"));
      HarvestParams& p = s.harvest;
      h.get("arrival_prob", p.arrival_prob);
      h.get("conv_eff", p.conv_eff);
      h.get("panel_area", p.panel_area);
      h.get("ground_irradiance", p.ground_irradiance);
      h.get("transmittance_max", p.transmittance_max);
      h.get("extinction", p.extinction);
      h.get("scale_height", p.scale_height);
      h.finish();
    }
    if (r.has("battery")) {
      Reader b(r.child("battery"), r.sub("battery"));
      b.get("capacity", s.battery.capacity);
      b.get("restore_threshold", s.battery.restore_threshold);
      b.get("resume_threshold", s.battery.resume_threshold);
      b.get("initial_level", s.battery.initial_level);
      b.finish();
    }
    r.finish();
  }
  if (top.has("layout")) {
    Reader r(top.child("layout"), "layout");
    r.get("n_sns", c.layout.n_sns);
    r.get("seed", c.layout.seed);
    r.get("area_side", c.layout.area_side);
    r.get("capacity", c.layout.capacity);
    if (r.has("dc_position")) c.layout.dc_position = vec2_from(r.child("dc_position"), "layout.dc_position");
    if (r.has("positions")) {
      const json& ps = r.child("positions");
      if (!ps.is_array()) throw std::invalid_argument("config: layout.positions must be an array");
      c.layout.positions.clear();
      for (const json& p : ps) c.layout.positions.push_back(vec2_from(p, "layout.positions[]"));
    }
    r.finish();
  }
  if (top.has("trust")) read_trust(Reader(top.child("trust"), "trust"), c.trust);
  if (top.has("model")) {
    Reader r(top.child("model"), "model");
    r.get("actor_width", c.model.actor_width);
    r.get("actor_layers", c.model.actor_layers);
    r.get("critic_width", c.model.critic_width);
    r.get("critic_layers", c.model.critic_layers);
    r.finish();
  }
  if (top.has("meta")) {
    Reader r(top.child("meta"), "meta");
    r.get("meta_iters", c.meta.meta_iters);
    r.get("tasks_per_iter", c.meta.tasks_per_iter);
    r.get("trajs_per_task", c.meta.trajs_per_task);
    r.get("inner_lr", c.meta.inner_lr);
    r.get("inner_steps", c.meta.inner_steps);
    if (r.has("outer")) read_trust(Reader(r.child("outer"), "meta.outer"), c.meta.outer);
    r.finish();
  }
  if (top.has("tasks")) {
    Reader r(top.child("tasks"), "tasks");
    r.get("min_sns", c.tasks.min_sns);
    r.get("max_sns", c.tasks.max_sns);
    r.get("area_side", c.tasks.area_side);
    if (r.has("dc_position")) c.tasks.dc_position = vec2_from(r.child("dc_position"), "tasks.dc_position");
    r.finish();
  }
  top.get("episodes", c.episodes);
  top.get("eval_episodes", c.eval_episodes);
  top.get("eval_greedy", c.eval_greedy);
  top.get("policy", c.policy);
  top.get("adapt_steps", c.adapt_steps);
  top.get("adapt_mode", c.adapt_mode);
  if (top.has("sweep")) {
    Reader r(top.child("sweep"), "sweep");
    r.get("n_sns", c.sweep.n_sns);
    r.get("arrival_rate", c.sweep.arrival_rate);
    r.get("harvest_prob", c.sweep.harvest_prob);
    r.finish();
  }
  top.finish();

  c.scenario.validate();
  c.trust.validate();
  c.meta.validate();
  c.tasks.validate();
  if (c.episodes < 0) throw std::invalid_argument("config: episodes must be >= 0");
  if (c.eval_episodes < 1) throw std::invalid_argument("config: eval_episodes must be >= 1");
  if (c.adapt_mode != "inner" && c.adapt_mode != "cadrl") {
    throw std::invalid_argument("config: adapt_mode must be inner or cadrl");
  }
  if (c.layout.positions.empty() && c.layout.n_sns < 1) {
    throw std::invalid_argument("config: layout.n_sns must be >= 1");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json doc = to_json(ExperimentConfig{});
  try {
    doc.merge_patch(json::parse(in));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("override: empty key segment in " + key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) {
      throw std::invalid_argument("override: unknown section " + key.substr(0, dot));
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::uint64_t config_hash(const json& resolved) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

NodeLayout build_layout(const LayoutConfig& l) {
  NodeLayout layout;
  layout.dc_position = l.dc_position;
  layout.area_side = l.area_side;
  if (!l.positions.empty()) {
    layout.sn_positions = l.positions;
  } else {
    Rng rng(derive_seed(l.seed, "layout"));
    for (int i = 0; i < l.n_sns; ++i) {
      const double x = rng.uniform(0.0, l.area_side);
      const double y = rng.uniform(0.0, l.area_side);
      layout.sn_positions.push_back({x, y});
    }
  }
  layout.validate();
  return layout;
}

Task build_task(const ExperimentConfig& c) {
  Task t;
  t.layout = build_layout(c.layout);
  t.capacity = static_cast<std::size_t>(c.layout.capacity);
  return t;
}

// ---------------------------------------------------------------------------

CompoundAction aoi_greedy_action(const Environment& env, const EnvState& state) {
  const auto& f = state.freshness;
  const auto& p = env.params();
  const auto& sns = env.task().layout.sn_positions;
  std::optional<std::size_t> target;
  for (std::size_t n = 0; n < f.size(); ++n) {
    if (f.sn_lifetime[n] && (!target || f.aoi[n] > f.aoi[*target])) target = n;
  }

  CompoundAction a;
  a.heading = state.uav.heading;
  if (target) {
    const Vec2 d = sns[*target] - state.uav.position;
    const double bearing =
        d.norm() > 0.0 ? normalize_heading(std::atan2(d.y, d.x)) : state.uav.heading;
    if (state.slot >= 2) {
      const double turn = std::clamp(heading_difference(state.uav.heading, bearing),
                                     -p.kinematics.max_turn, p.kinematics.max_turn);
      a.heading = normalize_heading(state.uav.heading + turn);
    } else {
      a.heading = bearing;
    }
    a.speed_next = p.kinematics.max_speed;
    if (state.uav.altitude > 0.0) {
      const double dist = slant_distance(state.uav, sns[*target]);
      const ChannelDraw los{true, 1.0, large_scale_gain(dist, true, p.channel)};
      if (upload_succeeds(los, p.channel)) a.schedule = *target + 1;
    }
  }
  a.offload = f.uav_packet_count() > 0 || a.schedule != 0;
  return a;
}

CompoundAction random_action(const Environment& env, const EnvState& state, Rng& rng) {
  const std::size_t n = env.n_sns();
  const auto [schedule, offload] = decode_discrete(rng.uniform_index(2 * (n + 1)), n);
  const auto& k = env.params().kinematics;
  CompoundAction a;
  a.schedule = schedule;
  a.offload = offload;
  a.speed_next = rng.uniform(0.0, k.max_speed);
  if (state.slot >= 2) {
    a.heading = normalize_heading(state.uav.heading + rng.uniform(-k.max_turn, k.max_turn));
  } else {
    a.heading = normalize_heading(rng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  return a;
}

PolicyFn aoi_greedy_policy() {
  return [](const Environment& env, const EnvState& s, Rng&) { return aoi_greedy_action(env, s); };
}

PolicyFn random_policy() { return random_action; }

PolicyFn network_policy(const PolicyParams& params, bool greedy) {
  return [params, greedy](const Environment& env, const EnvState& s, Rng& rng) {
    const std::vector<double> x = env.encode_state(s);
    const PolicyAction a = greedy ? greedy_action(params, x, env.action_mask())
                                  : sample_action(params, x, env.action_mask(), rng).action;
    return env.decode(a, s);
  };
}

// ---------------------------------------------------------------------------

EvalReport aggregate(const std::vector<EpisodeStats>& episodes) {
  EvalReport r;
  r.episodes = static_cast<int>(episodes.size());
  r.per_episode = episodes;
  if (episodes.empty()) return r;
  const double n = static_cast<double>(episodes.size());
  const auto mean_hw = [&](auto field, double& mean, double& hw) {
    mean = 0.0;
    for (const EpisodeStats& e : episodes) mean += field(e);
    mean /= n;
    double var = 0.0;
    for (const EpisodeStats& e : episodes) var += (field(e) - mean) * (field(e) - mean);
    hw = episodes.size() > 1 ? 1.96 * std::sqrt(var / (n - 1) / n) : 0.0;
  };
  mean_hw([](const EpisodeStats& e) { return e.avg_aoi; }, r.mean_aoi, r.aoi_half_width);
  mean_hw([](const EpisodeStats& e) { return e.avg_energy; }, r.mean_energy, r.energy_half_width);
  mean_hw([](const EpisodeStats& e) { return e.cost; }, r.mean_cost, r.cost_half_width);
  return r;
}

EvalReport run_eval(const Environment& env, const PolicyFn& policy, int episodes,
                    std::uint64_t seed, const SlotSink& sink) {
  if (episodes < 1) throw std::invalid_argument("run_eval: episodes must be >= 1");
  const int horizon = env.params().horizon;
  const double n_sns = static_cast<double>(env.n_sns());
  std::vector<EpisodeStats> all;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng(derive_seed(seed, "eval-env", static_cast<std::uint64_t>(e)));
    Rng policy_rng(derive_seed(seed, "eval-policy", static_cast<std::uint64_t>(e)));
    EnvState state = env.reset();
    EpisodeStats st;
    for (int t = 0; t < horizon; ++t) {
      const CompoundAction a = policy(env, state, policy_rng);
      const StepOutcome o = env.step(state, a, env_rng);
      if (sink) sink(e + 1, t + 1, state, a, o);
      st.episode_return += o.reward;
      double sum = 0.0;
      for (int d : o.next_state.freshness.aoi) sum += d;
      st.avg_aoi += sum / n_sns;
      st.avg_energy += o.events.consumed;
      st.exhausted_slots += o.events.energy_exhausted ? 1 : 0;
      st.restoring_slots += o.events.mode == Mode::restoring ? 1 : 0;
      state = o.next_state;
    }
    st.avg_aoi /= horizon;
    st.avg_energy /= horizon;
    st.cost = -st.episode_return;
    all.push_back(st);
  }
  return aggregate(all);
}

json slot_record(int episode, int slot, const EnvState& before, const CompoundAction& action,
                 const StepOutcome& out) {
  const StepEvents& ev = out.events;
  const EnvState& next = out.next_state;
  json y = json::array(), u = json::array();
  for (const auto& v : next.freshness.sn_lifetime) y.push_back(v ? json(*v) : json(nullptr));
  for (const auto& v : next.freshness.uav_lifetime) u.push_back(v ? json(*v) : json(nullptr));
  return json{
      {"episode", episode},
      {"slot", slot},
      {"mode", ev.mode == Mode::working ? "working" : "restoring"},
      {"position", {before.uav.position.x, before.uav.position.y}},
      {"speed", before.uav.speed},
      {"heading", before.uav.heading},
      {"battery", before.battery.level},
      {"action",
       {{"schedule", action.schedule},
        {"offload", action.offload},
        {"speed_next", action.speed_next},
        {"heading", action.heading}}},
      {"events",
       {{"arrivals", ev.arrivals},
        {"scheduled", ev.scheduled},
        {"upload_success", ev.upload_success},
        {"offload_success", ev.offload_success},
        {"harvested", ev.harvested},
        {"consumed", ev.consumed},
        {"energy_exhausted", ev.energy_exhausted}}},
      {"aoi", next.freshness.aoi},
      {"sn_lifetime", y},
      {"uav_lifetime", u},
      {"battery_after", next.battery.level},
      {"reward", out.reward}};
}

std::vector<SweepCell> run_sweep(
    const ExperimentConfig& base, std::uint64_t seed,
    const std::function<PolicyFn(const ExperimentConfig&, const Environment&, std::uint64_t)>&
        policy_for) {
  const std::vector<int> ns =
      base.sweep.n_sns.empty() ? std::vector<int>{-1} : base.sweep.n_sns;
  const std::vector<double> rates =
      base.sweep.arrival_rate.empty() ? std::vector<double>{base.scenario.arrival_rate}
                                      : base.sweep.arrival_rate;
  const std::vector<double> harvests =
      base.sweep.harvest_prob.empty() ? std::vector<double>{base.scenario.harvest.arrival_prob}
                                      : base.sweep.harvest_prob;
  std::vector<SweepCell> cells;
  std::uint64_t index = 0;
  for (int n : ns) {
    for (double rate : rates) {
      for (double hp : harvests) {
        ExperimentConfig c = base;
        if (n > 0) {
          if (!c.layout.positions.empty()) {
            if (static_cast<std::size_t>(n) > c.layout.positions.size()) {
              throw std::invalid_argument("sweep: n_sns exceeds the explicit layout");
            }
            c.layout.positions.resize(static_cast<std::size_t>(n));
          }
          c.layout.n_sns = n;
          c.layout.capacity = 0;
        }
        c.scenario.arrival_rate = rate;
        c.scenario.harvest.arrival_prob = hp;
        const Environment env(build_task(c), c.scenario);
        const PolicyFn policy = policy_for(c, env, derive_seed(seed, "cell", index++));
        SweepCell cell;
        cell.n_sns = static_cast<int>(env.n_sns());
        cell.arrival_rate = rate;
        cell.harvest_prob = hp;
        // Common random numbers across cells.
        cell.report = run_eval(env, policy, c.eval_episodes, seed);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::runtime_error("checkpoint: " + what + " is not an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::runtime_error("checkpoint: non-numeric entry in " + what);
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const ActorArchitecture& a = c.policy.arch;
  const CriticArchitecture& k = c.critic.arch;
  json j = {{"format", "suav-checkpoint"},
            {"version", 1},
            {"kind", c.kind},
            {"capacity", c.capacity},
            {"reward_scale", c.reward_scale},
            {"actor",
             {{"input_dim", a.input_dim},
              {"hidden_width", a.hidden_width},
              {"hidden_layers", a.hidden_layers},
              {"discrete_dim", a.discrete_dim},
              {"continuous_dim", a.continuous_dim},
              {"params", vector_json(flatten(c.policy))}}},
            {"critic",
             {{"input_dim", k.input_dim},
              {"hidden_width", k.hidden_width},
              {"hidden_layers", k.hidden_layers},
              {"params", vector_json(flatten(c.critic))}}}};
  auto out = open_out(path);
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ActorArchitecture>& expected) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint not found: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint: parse error in " + path);
  }
  if (j.value("format", "") != "suav-checkpoint" || j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint: unsupported format in " + path);
  }
  try {
    Checkpoint c;
    c.kind = j.at("kind").get<std::string>();
    c.capacity = j.at("capacity").get<int>();
    c.reward_scale = j.at("reward_scale").get<double>();
    const json& a = j.at("actor");
    const ActorArchitecture arch{a.at("input_dim").get<int>(), a.at("hidden_width").get<int>(),
                                 a.at("hidden_layers").get<int>(), a.at("discrete_dim").get<int>(),
                                 a.at("continuous_dim").get<int>()};
    if (expected && !(arch == *expected)) {
      throw std::runtime_error(
          "checkpoint: architecture mismatch (input " + std::to_string(arch.input_dim) + " vs " +
          std::to_string(expected->input_dim) + ", discrete " + std::to_string(arch.discrete_dim) +
          " vs " + std::to_string(expected->discrete_dim) + ", width " +
          std::to_string(arch.hidden_width) + " vs " + std::to_string(expected->hidden_width) + ")");
    }
    Rng dummy(0);
    c.policy = init_policy(arch, dummy);
    const Vector pv = vector_from(a.at("params"), "actor.params");
    if (static_cast<std::size_t>(pv.size()) != parameter_count(arch)) {
      throw std::runtime_error("checkpoint: actor parameter count mismatch");
    }
    unflatten(pv, c.policy);
    const json& k = j.at("critic");
    const CriticArchitecture carch{k.at("input_dim").get<int>(), k.at("hidden_width").get<int>(),
                                   k.at("hidden_layers").get<int>()};
    c.critic = init_critic(carch, dummy);
    const Vector cv = vector_from(k.at("params"), "critic.params");
    if (static_cast<std::size_t>(cv.size()) != parameter_count(carch)) {
      throw std::runtime_error("checkpoint: critic parameter count mismatch");
    }
    unflatten(cv, c.critic);
    return c;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: missing field (") + e.what() + ")");
  }
}

void write_manifest(const std::string& path, const std::string& command, const json& resolved,
                    std::uint64_t seed) {
  auto out = open_out(path);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(resolved)));
  out << "command: " << command << '\n'
      << "version: " << kVersion << '\n'
      << "seed: " << seed << '\n'
      << "config_hash: " << hash << '\n'
      << "config: " << resolved.dump() << '\n';
}

void write_curve_csv(const std::string& path, const std::vector<CurveRecord>& curve) {
  auto out = open_out(path);
  out << "episode,return,cost,avg_aoi,avg_energy,restoring_slots,exhausted_slots,kl,surrogate\n";
  for (const CurveRecord& r : curve) {
    out << r.episode << ',' << format_double(r.stats.episode_return) << ','
        << format_double(r.stats.cost) << ',' << format_double(r.stats.avg_aoi) << ','
        << format_double(r.stats.avg_energy) << ',' << r.stats.restoring_slots << ','
        << r.stats.exhausted_slots << ',' << format_double(r.kl) << ','
        << format_double(r.surrogate) << '\n';
  }
}

void write_meta_curve_csv(const std::string& path, const std::vector<MetaCurveRecord>& curve) {
  auto out = open_out(path);
  out << "iteration,pre_adapt_return,post_adapt_return,post_adapt_aoi,post_adapt_energy,"
         "kl_discrete,kl_continuous,accepted_discrete,accepted_continuous\n";
  for (const MetaCurveRecord& r : curve) {
    out << r.iteration << ',' << format_double(r.pre_adapt_return) << ','
        << format_double(r.post_adapt_return) << ',' << format_double(r.post_adapt_aoi) << ','
        << format_double(r.post_adapt_energy) << ',' << format_double(r.update.discrete.kl) << ','
        << format_double(r.update.continuous.kl) << ',' << r.update.discrete.accepted << ','
        << r.update.continuous.accepted << '\n';
  }
}

void write_adaptation_csv(const std::string& path, const std::vector<AdaptationRecord>& curve) {
  auto out = open_out(path);
  out << "step,return,avg_aoi,avg_energy\n";
  for (const AdaptationRecord& r : curve) {
    out << r.step << ',' << format_double(r.stats.episode_return) << ','
        << format_double(r.stats.avg_aoi) << ',' << format_double(r.stats.avg_energy) << '\n';
  }
}

namespace {

void report_columns(std::ostream& out, const EvalReport& r) {
  out << r.episodes << ',' << format_double(r.mean_aoi) << ',' << format_double(r.aoi_half_width)
      << ',' << format_double(r.mean_energy) << ',' << format_double(r.energy_half_width) << ','
      << format_double(r.mean_cost) << ',' << format_double(r.cost_half_width);
}

constexpr const char* kReportHeader =
    "episodes,mean_aoi,aoi_half_width,mean_energy,energy_half_width,mean_cost,cost_half_width";

}  // namespace

void write_summary_csv(const std::string& path, const std::string& policy, const EvalReport& r,
                       int n_sns) {
  auto out = open_out(path);
  out << "policy,n_sns," << kReportHeader << '\n' << policy << ',' << n_sns << ',';
  report_columns(out, r);
  out << '\n';
}

void write_sweep_csv(const std::string& path, const std::string& policy,
                     const std::vector<SweepCell>& cells) {
  auto out = open_out(path);
  out << "policy,n_sns,arrival_rate,harvest_prob," << kReportHeader << '\n';
  for (const SweepCell& c : cells) {
    out << policy << ',' << c.n_sns << ',' << format_double(c.arrival_rate) << ','
        << format_double(c.harvest_prob) << ',';
    report_columns(out, c.report);
    out << '\n';
  }
}

}  // namespace suav
