#include "suav/energy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace suav {

void PowerParams::validate() const {
  const double positive[] = {n_rotors,         blade_drag_chi,  thrust_coef_xT,
                             rotor_solidity_xs, induced_corr_xf, air_density_rho,
                             disc_area_A,       fuselage_drag_d0, flat_plate_SFA,
                             mass_M,            gravity_g,        comm_power};
  for (const double v : positive) {
    if (!(v > 0.0)) throw std::invalid_argument("power parameters must be positive");
  }
}

void HarvestParams::validate() const {
  if (!(arrival_prob >= 0.0 && arrival_prob <= 1.0)) {
    throw std::invalid_argument("harvest: arrival probability outside [0, 1]");
  }
  if (!(extinction > 0.0 && transmittance_max > extinction)) {
    throw std::invalid_argument("harvest: require phi1 > phi2 > 0");
  }
  if (!(conv_eff > 0.0 && panel_area > 0.0 && ground_irradiance > 0.0 &&
        scale_height > 0.0)) {
    throw std::invalid_argument("harvest parameters must be positive");
  }
}

void BatteryParams::validate() const {
  if (!(restore_threshold > 0.0 && restore_threshold < resume_threshold &&
        resume_threshold <= capacity)) {
    throw std::invalid_argument("battery: require 0 < E_th1 < E_th2 <= E_max");
  }
  if (!(initial_level >= 0.0 && initial_level <= capacity)) {
    throw std::invalid_argument("battery: initial level outside [0, E_max]");
  }
}

double rotor_thrust(double speed, double accel, const PowerParams& p) {
  const double drag = 0.5 * p.air_density_rho * speed * speed * p.flat_plate_SFA;
  const double horizontal = p.mass_M * accel + drag;
  const double weight = p.mass_M * p.gravity_g;
  return std::sqrt(horizontal * horizontal + weight * weight) / p.n_rotors;
}

PropulsionTerms propulsion_terms(double speed, double accel, const PowerParams& p) {
  const double t = rotor_thrust(speed, accel, p);
  const double rho = p.air_density_rho;
  const double area = p.disc_area_A;
  const double v2 = speed * speed;

  PropulsionTerms terms;
  terms.blade_profile =
      p.n_rotors * (p.blade_drag_chi / 8.0) * (t / (p.thrust_coef_xT * rho * area) + 3.0 * v2) *
      std::sqrt(t * rho * p.rotor_solidity_xs * p.rotor_solidity_xs * area / p.thrust_coef_xT);
  terms.parasite =
      p.n_rotors * 0.5 * p.fuselage_drag_d0 * rho * p.rotor_solidity_xs * area * v2 * speed;
  const double inner =
      std::sqrt(t * t / (4.0 * rho * rho * area * area) + v2 * v2 / 4.0) - v2 / 2.0;
  terms.induced = p.n_rotors * (1.0 + p.induced_corr_xf) * t * std::sqrt(std::max(inner, 0.0));
  return terms;
}

double propulsion_power(double speed, double accel, const PowerParams& p) {
  return propulsion_terms(speed, accel, p).total();
}

double slot_energy(Mode mode, double level, bool schedule_nonzero, bool offload,
                   double speed, double accel, const PowerParams& p,
                   const BatteryParams& battery, double slot_seconds,
                   double schedule_seconds) {
  if (mode == Mode::restoring && level < battery.resume_threshold) return 0.0;
  const double flight = slot_seconds * propulsion_power(speed, accel, p);
  const bool can_transmit = mode == Mode::working && level >= battery.restore_threshold;
  if (can_transmit && offload) {
    const double window = schedule_nonzero ? slot_seconds - schedule_seconds : slot_seconds;
    return flight + window * p.comm_power;
  }
  return flight;
}

double solar_energy(double altitude, const HarvestParams& hp, double slot_seconds) {
  return slot_seconds * hp.conv_eff * hp.panel_area * hp.ground_irradiance *
         (hp.transmittance_max - hp.extinction * std::exp(-altitude / hp.scale_height));
}

double harvest(double altitude, const HarvestParams& hp, double slot_seconds,
               Rng& rng) {
  if (!(altitude >= 0.0)) throw std::invalid_argument("harvest: negative altitude");
  return rng.bernoulli(hp.arrival_prob) ? solar_energy(altitude, hp, slot_seconds) : 0.0;
}

BatteryUpdate update_battery(const BatteryState& b, double harvested,
                             double consumed, const BatteryParams& params) {
  BatteryUpdate out;
  out.energy_exhausted = consumed > b.level;
  out.state.level = std::clamp(b.level + harvested - consumed, 0.0, params.capacity);
  if (out.energy_exhausted || out.state.level < params.restore_threshold) {
    out.state.mode = Mode::restoring;
  } else if (b.mode == Mode::restoring && out.state.level >= params.resume_threshold) {
    out.state.mode = Mode::working;
  } else {
    out.state.mode = b.mode;
  }
  return out;
}

}  // namespace suav
