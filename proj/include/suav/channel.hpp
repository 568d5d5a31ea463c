#pragma once

#include "suav/random.hpp"

namespace suav {

/// Air-to-ground channel constants, all in linear scale.
struct ChannelParams {
  double beta = 11.95;
  double beta_prime = 0.14;
  double beta0 = 1e-6;          // gain at 1 m (-60 dB)
  double kappa = 0.2;           // extra NLoS attenuation
  double path_loss_exp = 2.3;
  double noise_power = 1e-13;   // W (-100 dBm)
  double sn_tx_power = 0.05;    // W
  double uav_tx_power = 1.0;    // W
  double bandwidth = 5e6;       // Hz
  double snr_threshold = 1.5848931924611136;  // 2 dB

  void validate() const;
};

struct ChannelDraw {
  bool is_los = false;
  double small_scale_power = 0.0;  // |h~|^2
  double gain = 0.0;               // |h|^2
};

double db_to_linear(double db);
double dbm_to_watts(double dbm);

/// Elevation-dependent LoS probability. Requires altitude > 0 and
/// d >= altitude.
double los_probability(double d, double altitude, const ChannelParams& p);

/// Large-scale gain for a fixed LoS/NLoS branch.
double large_scale_gain(double d, bool is_los, const ChannelParams& p);

/// Draws the LoS branch, then unit-mean Rayleigh power fading.
ChannelDraw sample_gain(double d, double altitude, const ChannelParams& p,
                        Rng& rng);

double upload_snr(const ChannelDraw& draw, const ChannelParams& p);
bool upload_succeeds(const ChannelDraw& draw, const ChannelParams& p);

/// Shannon rate of the UAV-to-DC link in bit/s.
double offload_rate(const ChannelDraw& draw, const ChannelParams& p);
bool offload_succeeds(const ChannelDraw& draw, double buffer_bits,
                      double window, const ChannelParams& p);

}  // namespace suav
