#include "suav/env.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>
#include <string>

namespace suav {

void ScenarioParams::validate() const {
  kinematics.validate();
  channel.validate();
  power.validate();
  harvest.validate();
  battery.validate();
  if (!(altitude > 0.0)) throw std::invalid_argument("scenario: altitude must be positive");
  if (!(arrival_rate >= 0.0 && arrival_rate <= 1.0)) {
    throw std::invalid_argument("scenario: arrival_rate outside [0, 1]");
  }
  if (!(packet_bits > 0.0)) throw std::invalid_argument("scenario: packet_bits must be positive");
  if (horizon < 1) throw std::invalid_argument("scenario: horizon must be >= 1");
  if (!(schedule_seconds > 0.0 && schedule_seconds < kinematics.slot_seconds)) {
    throw std::invalid_argument("scenario: schedule window must lie in (0, slot)");
  }
  if (!(aoi_weight >= 0.0 && energy_weight >= 0.0)) {
    throw std::invalid_argument("scenario: weights must be non-negative");
  }
  if (initial_aoi < 0) throw std::invalid_argument("scenario: initial_aoi must be >= 0");
}

std::pair<std::size_t, bool> decode_discrete(std::size_t index, std::size_t n_sns) {
  if (index >= 2 * (n_sns + 1)) {
    throw std::invalid_argument("decode_discrete: index " + std::to_string(index) +
                                " outside [0, " + std::to_string(2 * (n_sns + 1)) + ")");
  }
  return {index % (n_sns + 1), index / (n_sns + 1) == 1};
}

std::size_t encode_discrete(std::size_t schedule, bool offload, std::size_t n_sns) {
  if (schedule > n_sns) throw std::invalid_argument("encode_discrete: schedule out of range");
  return schedule + (offload ? n_sns + 1 : 0);
}

Environment::Environment(Task task, ScenarioParams params)
    : task_(std::move(task)), params_(std::move(params)) {
  task_.layout.validate();
  params_.validate();
  if (task_.capacity == 0) task_.capacity = task_.layout.size();
  if (task_.capacity < task_.layout.size()) {
    throw std::invalid_argument("task: capacity below the number of sensor nodes");
  }
  const std::size_t slots = task_.slots();
  mask_.assign(2 * (slots + 1), 0);
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    mask_[i] = (i % (slots + 1)) <= task_.n_sns() ? 1 : 0;
  }
}

std::size_t Environment::state_dim() const { return 5 * task_.slots() + 5; }

std::size_t Environment::discrete_dim() const { return 2 * (task_.slots() + 1); }

EnvState Environment::reset() const {
  EnvState s;
  s.uav.position = task_.layout.dc_position;
  s.uav.speed = 0.0;
  s.uav.heading = 0.0;
  s.uav.altitude = params_.altitude;
  s.freshness = FreshnessState::initial(task_.n_sns(), params_.initial_aoi);
  s.battery.level = params_.battery.initial_level;
  s.battery.mode = s.battery.level < params_.battery.restore_threshold ? Mode::restoring
                                                                      : Mode::working;
  if (s.battery.mode == Mode::restoring) s.uav.altitude = 0.0;
  s.slot = 1;
  return s;
}

std::vector<Vec2> Environment::relative_positions(const EnvState& state) const {
  std::vector<Vec2> rel;
  rel.reserve(task_.n_sns() + 1);
  rel.push_back(state.uav.position - task_.layout.dc_position);
  for (const Vec2& sn : task_.layout.sn_positions) rel.push_back(state.uav.position - sn);
  return rel;
}

CompoundAction Environment::decode(const PolicyAction& action, const EnvState& state) const {
  const auto [schedule, offload] = decode_discrete(action.discrete, task_.slots());
  if (schedule > task_.n_sns()) {
    throw std::invalid_argument("decode: masked discrete action selected");
  }
  const MotionCommand cmd = clamp_action(action.raw_speed, action.raw_turn, state.uav,
                                         params_.kinematics, state.slot >= 2);
  return CompoundAction{schedule, offload, cmd.speed_next, cmd.heading};
}

double Environment::reward(const std::vector<int>& aoi, double consumed) const {
  double aoi_sum = 0.0;
  for (const int d : aoi) aoi_sum += d;
  return -(params_.aoi_weight * aoi_sum + params_.energy_weight * consumed) /
         static_cast<double>(params_.horizon);
}

StepOutcome Environment::step(const EnvState& state, const CompoundAction& action,
                              Rng& rng) const {
  const ScenarioParams& p = params_;
  const double tau0 = p.kinematics.slot_seconds;
  if (action.schedule > task_.n_sns()) {
    throw std::invalid_argument("step: schedule refers to a missing sensor node");
  }

  StepOutcome out;
  StepEvents& ev = out.events;
  ev.mode = state.battery.mode;
  const bool working = ev.mode == Mode::working;

  // Restoring mode ignores the action: grounded, silent, motionless.
  const std::size_t schedule = working ? action.schedule : 0;
  const bool offload = working && action.offload;
  const double speed_next = working ? action.speed_next : 0.0;
  const double heading = working ? action.heading : state.uav.heading;

  ev.scheduled = schedule;
  ev.offload_requested = offload;
  ev.speed = state.uav.speed;
  ev.speed_next = speed_next;
  ev.accel = (speed_next - state.uav.speed) / tau0;

  UavKinematics moved =
      working ? step_kinematics(state.uav, speed_next, heading, p.kinematics) : state.uav;

  ev.arrivals = sample_arrivals(task_.n_sns(), p.arrival_rate, rng);
  FreshnessState fresh = advance_sn_lifetimes(state.freshness, ev.arrivals);

  // Channels are evaluated at the slot's starting position C_u(t).
  std::optional<UploadEvent> upload;
  if (schedule != 0) {
    const std::size_t sn = schedule - 1;
    const double d = slant_distance(state.uav, task_.layout.sn_positions[sn]);
    const ChannelDraw draw = sample_gain(d, state.uav.altitude, p.channel, rng);
    ev.upload_success = fresh.sn_lifetime[sn].has_value() && upload_succeeds(draw, p.channel);
    upload = UploadEvent{sn, ev.upload_success};
  }
  fresh = advance_uav_lifetimes(std::move(fresh), upload);

  if (offload) {
    ev.offload_window = schedule != 0 ? tau0 - p.schedule_seconds : tau0;
    const double d = slant_distance(state.uav, task_.layout.dc_position);
    const ChannelDraw draw = sample_gain(d, state.uav.altitude, p.channel, rng);
    ev.offload_success =
        offload_succeeds(draw, buffer_bits(fresh, p.packet_bits), ev.offload_window, p.channel);
  }
  fresh = advance_aoi(std::move(fresh), ev.offload_success);

  ev.consumed = slot_energy(ev.mode, state.battery.level, schedule != 0, offload,
                            state.uav.speed, ev.accel, p.power, p.battery, tau0,
                            p.schedule_seconds);
  ev.harvested = harvest(state.uav.altitude, p.harvest, tau0, rng);
  const BatteryUpdate battery =
      update_battery(state.battery, ev.harvested, ev.consumed, p.battery);
  ev.next_mode = battery.state.mode;
  ev.energy_exhausted = battery.energy_exhausted;

  EnvState& next = out.next_state;
  next.uav = moved;
  if (ev.next_mode == Mode::restoring) {
    next.uav.altitude = 0.0;
    next.uav.speed = 0.0;
  } else {
    next.uav.altitude = p.altitude;
    if (ev.mode == Mode::restoring) next.uav.speed = 0.0;
  }
  next.freshness = std::move(fresh);
  next.battery = battery.state;
  next.slot = state.slot + 1;

  out.reward = reward(next.freshness.aoi, ev.consumed);
  return out;
}

std::vector<double> Environment::encode_state(const EnvState& state) const {
  std::vector<double> v(state_dim());
  encode_state(state, v.data());
  return v;
}

void Environment::encode_state(const EnvState& state, double* out) const {
  const std::size_t slots = task_.slots();
  const std::size_t n = task_.n_sns();
  const double side = task_.layout.area_side;
  const double horizon = static_cast<double>(params_.horizon);
  const auto lifetime = [horizon](const std::optional<int>& x) {
    return x ? std::min(static_cast<double>(*x), horizon) / horizon : -1.0 / horizon;
  };

  std::size_t k = 0;
  const Vec2 dc = state.uav.position - task_.layout.dc_position;
  out[k++] = dc.x / side;
  out[k++] = dc.y / side;
  for (std::size_t i = 0; i < slots; ++i) {
    const Vec2 rel = i < n ? state.uav.position - task_.layout.sn_positions[i] : Vec2{};
    out[k++] = rel.x / side;
    out[k++] = rel.y / side;
  }
  out[k++] = state.uav.speed / params_.kinematics.max_speed;
  out[k++] = state.uav.heading / (2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < slots; ++i) {
    out[k++] = i < n ? lifetime(state.freshness.sn_lifetime[i]) : -1.0 / horizon;
  }
  for (std::size_t i = 0; i < slots; ++i) {
    out[k++] = i < n ? lifetime(state.freshness.uav_lifetime[i]) : -1.0 / horizon;
  }
  for (std::size_t i = 0; i < slots; ++i) {
    out[k++] = i < n ? std::min(static_cast<double>(state.freshness.aoi[i]), horizon) / horizon
                     : 0.0;
  }
  out[k++] = state.battery.level / params_.battery.capacity;
}

}  // namespace suav
