#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace suav {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;

  double norm() const { return std::hypot(x, y); }
};

/// Ground positions of the sensor nodes and the data center, in meters.
struct NodeLayout {
  std::vector<Vec2> sn_positions;
  Vec2 dc_position{0.0, 160.0};
  double area_side = 200.0;

  std::size_t size() const { return sn_positions.size(); }
  /// Throws std::invalid_argument when empty or when a node lies outside
  /// the square [0, area_side]^2.
  void validate() const;
};

struct KinematicLimits {
  double max_speed = 20.0;                      // m/s
  double max_turn = std::numbers::pi / 3.0;     // rad per slot
  double slot_seconds = 0.5;                    // tau_0

  void validate() const;
};

struct UavKinematics {
  Vec2 position;
  double speed = 0.0;
  double heading = 0.0;  // heading flown in the previous slot, [0, 2pi)
  double altitude = 100.0;

  friend bool operator==(const UavKinematics&, const UavKinematics&) = default;
};

/// Feasible motion command for one slot.
struct MotionCommand {
  double speed_next = 0.0;
  double heading = 0.0;
  double turn = 0.0;  // signed heading change actually applied
};

/// Wraps an angle into [0, 2pi).
double normalize_heading(double angle);

/// Signed smallest difference b - a, in (-pi, pi].
double heading_difference(double a, double b);

/// Maps raw (unbounded) continuous outputs onto a feasible command. The speed
/// output is squashed into [0, 1] and scaled to [0, max_speed]; the turn
/// output is squashed into [-1, 1] and scaled to [-max_turn, max_turn]. When
/// `turn_limited` is false (first slot) the turn output selects an absolute
/// heading in [0, 2pi) instead. NaN inputs are treated as zero.
MotionCommand clamp_action(double raw_speed, double raw_turn,
                           const UavKinematics& kin,
                           const KinematicLimits& limits,
                           bool turn_limited = true);

/// Constant-acceleration update over one slot (trapezoidal displacement).
UavKinematics step_kinematics(const UavKinematics& kin, double speed_next,
                              double heading, const KinematicLimits& limits);

/// Distance from the UAV (at its current altitude) to a ground node.
double slant_distance(const UavKinematics& kin, Vec2 node);

}  // namespace suav
