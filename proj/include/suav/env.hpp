#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "suav/channel.hpp"
#include "suav/energy.hpp"
#include "suav/freshness.hpp"
#include "suav/random.hpp"
#include "suav/world.hpp"

namespace suav {

/// Every physical/system constant of one scenario. Defaults follow the
/// published system-parameter table.
struct ScenarioParams {
  KinematicLimits kinematics;
  double altitude = 100.0;  // H
  ChannelParams channel;
  PowerParams power;
  HarvestParams harvest;
  BatteryParams battery;
  double arrival_rate = 0.1;      // lambda_0, per slot
  double packet_bits = kDefaultPacketBits;
  int horizon = 100;              // T
  double schedule_seconds = 0.25; // tau_s
  double aoi_weight = 1.0;        // omega_1
  double energy_weight = 10.0;    // omega_2
  int initial_aoi = 0;

  void validate() const;
};

/// One MDP instance. `capacity` is the number of SN slots the state/action
/// encoding is sized for (>= the active SN count); the surplus is padded and
/// masked so that one network can serve tasks of different sizes.
struct Task {
  NodeLayout layout;
  std::size_t capacity = 0;

  std::size_t n_sns() const { return layout.size(); }
  std::size_t slots() const { return capacity == 0 ? layout.size() : capacity; }
};

struct EnvState {
  UavKinematics uav;
  FreshnessState freshness;
  BatteryState battery;
  int slot = 1;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Feasible compound action: schedule is 0 (none) or an SN number 1..N.
struct CompoundAction {
  std::size_t schedule = 0;
  bool offload = false;
  double speed_next = 0.0;
  double heading = 0.0;
};

/// Raw policy output before decoding: flattened discrete index and
/// pre-squash continuous pair (speed, turn).
struct PolicyAction {
  std::size_t discrete = 0;
  double raw_speed = 0.0;
  double raw_turn = 0.0;
};

struct StepEvents {
  std::vector<std::uint8_t> arrivals;
  std::size_t scheduled = 0;       // b(t) as executed, 0 = none
  bool upload_success = false;     // z_{b(t)}(t)
  bool offload_requested = false;  // q(t) as executed
  bool offload_success = false;    // o(t)
  double offload_window = 0.0;
  double speed = 0.0;              // v_s(t)
  double speed_next = 0.0;         // v_s(t+1)
  double accel = 0.0;
  double harvested = 0.0;
  double consumed = 0.0;
  Mode mode = Mode::working;       // m(t)
  Mode next_mode = Mode::working;  // m(t+1)
  bool energy_exhausted = false;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  StepEvents events;
};

/// (schedule, offload) for a flattened index: schedule = index mod (n+1),
/// offload = index div (n+1). Throws when index >= 2(n+1).
std::pair<std::size_t, bool> decode_discrete(std::size_t index, std::size_t n_sns);
std::size_t encode_discrete(std::size_t schedule, bool offload, std::size_t n_sns);

/// Gym-style environment over one task. Stateless apart from its immutable
/// configuration; all episode state lives in EnvState values.
class Environment {
 public:
  Environment(Task task, ScenarioParams params);

  const Task& task() const { return task_; }
  const ScenarioParams& params() const { return params_; }
  std::size_t n_sns() const { return task_.n_sns(); }

  /// Length 5 * slots + 5.
  std::size_t state_dim() const;
  /// 2 * (slots + 1).
  std::size_t discrete_dim() const;
  /// 1 for every valid flattened discrete index, 0 for padded SN slots.
  const std::vector<std::uint8_t>& action_mask() const { return mask_; }

  EnvState reset() const;

  /// Relative offsets UAV -> node for the DC (index 0) and each SN.
  std::vector<Vec2> relative_positions(const EnvState& state) const;

  CompoundAction decode(const PolicyAction& action, const EnvState& state) const;
  StepOutcome step(const EnvState& state, const CompoundAction& action, Rng& rng) const;

  std::vector<double> encode_state(const EnvState& state) const;
  void encode_state(const EnvState& state, double* out) const;

  /// Reward for a post-update AoI vector and slot energy.
  double reward(const std::vector<int>& aoi, double consumed) const;

 private:
  Task task_;
  ScenarioParams params_;
  std::vector<std::uint8_t> mask_;
};

}  // namespace suav
