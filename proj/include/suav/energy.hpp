#pragma once

#include "suav/random.hpp"

namespace suav {

/// Rotary-wing propulsion constants.
struct PowerParams {
  double n_rotors = 4.0;
  double blade_drag_chi = 0.012;
  double thrust_coef_xT = 0.302;
  double rotor_solidity_xs = 0.0955;
  double induced_corr_xf = 0.131;
  double air_density_rho = 1.293;  // kg/m^3
  double disc_area_A = 0.0314;     // m^2
  double fuselage_drag_d0 = 0.834;
  double flat_plate_SFA = 0.1;     // m^2
  double mass_M = 2.0;             // kg
  double gravity_g = 9.8;          // m/s^2
  double comm_power = 1.0;         // W, transmit power while offloading

  void validate() const;
};

/// Solar harvesting constants.
struct HarvestParams {
  double arrival_prob = 0.7;   // lambda_1
  double conv_eff = 0.4;       // eta_1
  double panel_area = 0.14;    // m^2
  double ground_irradiance = 1367.0;  // W/m^2
  double transmittance_max = 0.8978;  // phi_1
  double extinction = 0.2804;         // phi_2
  double scale_height = 8000.0;       // m

  void validate() const;
};

struct BatteryParams {
  double capacity = 6000.0;           // E_max, J
  double restore_threshold = 1000.0;  // E_th1: below it the UAV lands
  double resume_threshold = 3000.0;   // E_th2: at or above it the UAV resumes
  double initial_level = 6000.0;

  void validate() const;
};

enum class Mode { restoring, working };

struct BatteryState {
  double level = 6000.0;
  Mode mode = Mode::working;

  friend bool operator==(const BatteryState&, const BatteryState&) = default;
};

struct BatteryUpdate {
  BatteryState state;
  bool energy_exhausted = false;
};

/// Breakdown of the propulsion power into its three terms (already scaled by
/// the rotor count).
struct PropulsionTerms {
  double blade_profile = 0.0;
  double parasite = 0.0;
  double induced = 0.0;
  double total() const { return blade_profile + parasite + induced; }
};

double rotor_thrust(double speed, double accel, const PowerParams& p);
PropulsionTerms propulsion_terms(double speed, double accel, const PowerParams& p);
double propulsion_power(double speed, double accel, const PowerParams& p);

/// Energy spent in one slot by flight and offloading. The four cases are
/// dispatched on mode, battery level and the (schedule, offload) decision.
double slot_energy(Mode mode, double level, bool schedule_nonzero, bool offload,
                   double speed, double accel, const PowerParams& p,
                   const BatteryParams& battery, double slot_seconds,
                   double schedule_seconds);

/// Deterministic energy reaching the panel in one slot at altitude h.
double solar_energy(double altitude, const HarvestParams& hp, double slot_seconds);

/// Bernoulli(lambda_1) arrival of solar_energy.
double harvest(double altitude, const HarvestParams& hp, double slot_seconds,
               Rng& rng);

/// Battery dynamics with working/restoring hysteresis. A consumption larger
/// than the stored level clamps the level at zero, forces restoring mode and
/// raises energy_exhausted.
BatteryUpdate update_battery(const BatteryState& b, double harvested,
                             double consumed, const BatteryParams& params);

}  // namespace suav
