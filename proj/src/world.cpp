#include "suav/world.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace suav {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double finite_or_zero(double v) { return std::isnan(v) ? 0.0 : v; }

}  // namespace

void NodeLayout::validate() const {
  if (sn_positions.empty()) {
    throw std::invalid_argument("layout: at least one sensor node is required");
  }
  if (!(area_side > 0.0)) {
    throw std::invalid_argument("layout: area_side must be positive");
  }
  const auto inside = [this](Vec2 p) {
    return p.x >= 0.0 && p.x <= area_side && p.y >= 0.0 && p.y <= area_side;
  };
  if (!inside(dc_position)) {
    throw std::invalid_argument("layout: data center outside the area");
  }
  for (std::size_t i = 0; i < sn_positions.size(); ++i) {
    if (!inside(sn_positions[i])) {
      throw std::invalid_argument("layout: sensor node " + std::to_string(i + 1) +
                                  " outside the area");
    }
  }
}

void KinematicLimits::validate() const {
  if (!(max_speed > 0.0) || !(max_turn > 0.0) || !(slot_seconds > 0.0)) {
    throw std::invalid_argument("kinematic limits must be strictly positive");
  }
}

double normalize_heading(double angle) {
  double wrapped = std::fmod(angle, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  // fmod of a tiny negative value can round up to exactly 2pi.
  if (wrapped >= kTwoPi) wrapped = 0.0;
  return wrapped;
}

double heading_difference(double a, double b) {
  double d = std::fmod(b - a, kTwoPi);
  if (d > std::numbers::pi) d -= kTwoPi;
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

MotionCommand clamp_action(double raw_speed, double raw_turn,
                           const UavKinematics& kin,
                           const KinematicLimits& limits, bool turn_limited) {
  const double speed_fraction = 0.5 * (1.0 + std::tanh(finite_or_zero(raw_speed)));
  const double turn_fraction = std::tanh(finite_or_zero(raw_turn));

  MotionCommand cmd;
  cmd.speed_next =
      std::clamp(speed_fraction * limits.max_speed, 0.0, limits.max_speed);
  if (turn_limited) {
    cmd.turn = std::clamp(turn_fraction * limits.max_turn, -limits.max_turn,
                          limits.max_turn);
    cmd.heading = normalize_heading(kin.heading + cmd.turn);
  } else {
    cmd.heading = normalize_heading(std::numbers::pi * (1.0 + turn_fraction));
    cmd.turn = heading_difference(kin.heading, cmd.heading);
  }
  return cmd;
}

UavKinematics step_kinematics(const UavKinematics& kin, double speed_next,
                              double heading, const KinematicLimits& limits) {
  UavKinematics next = kin;
  const double distance = 0.5 * (kin.speed + speed_next) * limits.slot_seconds;
  next.position = kin.position + distance * Vec2{std::cos(heading), std::sin(heading)};
  next.speed = speed_next;
  next.heading = heading;
  return next;
}

double slant_distance(const UavKinematics& kin, Vec2 node) {
  const Vec2 offset = kin.position - node;
  return std::sqrt(kin.altitude * kin.altitude + offset.x * offset.x +
                   offset.y * offset.y);
}

}  // namespace suav
