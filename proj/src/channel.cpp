#include "suav/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace suav {

void ChannelParams::validate() const {
  const double positive[] = {beta,        beta_prime,   beta0,
                             kappa,       path_loss_exp, noise_power,
                             sn_tx_power, uav_tx_power, bandwidth,
                             snr_threshold};
  for (const double v : positive) {
    if (!(v > 0.0)) throw std::invalid_argument("channel parameters must be positive");
  }
  if (!(kappa < 1.0)) throw std::invalid_argument("channel: kappa must be < 1");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double los_probability(double d, double altitude, const ChannelParams& p) {
  if (!(altitude > 0.0)) {
    throw std::invalid_argument("los_probability: altitude must be positive");
  }
  if (!(d >= altitude)) {
    throw std::invalid_argument("los_probability: distance below altitude");
  }
  const double elevation_deg = (180.0 / std::numbers::pi) * std::asin(altitude / d);
  return 1.0 / (1.0 + p.beta * std::exp(-p.beta_prime * (elevation_deg - p.beta)));
}

double large_scale_gain(double d, bool is_los, const ChannelParams& p) {
  const double los_gain = p.beta0 * std::pow(d, -p.path_loss_exp);
  return is_los ? los_gain : p.kappa * los_gain;
}

ChannelDraw sample_gain(double d, double altitude, const ChannelParams& p,
                        Rng& rng) {
  const double p_los = los_probability(d, altitude, p);
  ChannelDraw draw;
  draw.is_los = rng.uniform() < p_los;
  draw.small_scale_power = rng.exponential();
  draw.gain = large_scale_gain(d, draw.is_los, p) * draw.small_scale_power;
  return draw;
}

double upload_snr(const ChannelDraw& draw, const ChannelParams& p) {
  return p.sn_tx_power * draw.gain / p.noise_power;
}

bool upload_succeeds(const ChannelDraw& draw, const ChannelParams& p) {
  return upload_snr(draw, p) >= p.snr_threshold;
}

double offload_rate(const ChannelDraw& draw, const ChannelParams& p) {
  return p.bandwidth * std::log2(1.0 + p.uav_tx_power * draw.gain / p.noise_power);
}

bool offload_succeeds(const ChannelDraw& draw, double buffer_bits,
                      double window, const ChannelParams& p) {
  if (buffer_bits <= 0.0) return true;
  const double rate = offload_rate(draw, p);
  if (!(rate > 0.0)) return false;
  return buffer_bits / rate <= window;
}

}  // namespace suav
