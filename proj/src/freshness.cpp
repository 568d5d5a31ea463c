#include "suav/freshness.hpp"

#include <stdexcept>

namespace suav {

FreshnessState FreshnessState::initial(std::size_t n_sns, int initial_aoi) {
  FreshnessState s;
  s.sn_lifetime.assign(n_sns, std::nullopt);
  s.uav_lifetime.assign(n_sns, std::nullopt);
  s.aoi.assign(n_sns, initial_aoi);
  return s;
}

std::size_t FreshnessState::uav_packet_count() const {
  std::size_t count = 0;
  for (const auto& u : uav_lifetime) count += u.has_value() ? 1 : 0;
  return count;
}

std::vector<std::uint8_t> sample_arrivals(std::size_t n_sns, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("sample_arrivals: rate must lie in [0, 1]");
  }
  std::vector<std::uint8_t> k(n_sns, 0);
  for (auto& flag : k) flag = rng.bernoulli(rate) ? 1 : 0;
  return k;
}

FreshnessState advance_sn_lifetimes(FreshnessState state,
                                    const std::vector<std::uint8_t>& arrivals) {
  if (arrivals.size() != state.size()) {
    throw std::invalid_argument("advance_sn_lifetimes: arrival vector size mismatch");
  }
  for (std::size_t n = 0; n < arrivals.size(); ++n) {
    auto& y = state.sn_lifetime[n];
    if (arrivals[n] != 0) {
      y = 0;
    } else if (y) {
      ++*y;
    }
  }
  return state;
}

FreshnessState advance_uav_lifetimes(FreshnessState state,
                                     std::optional<UploadEvent> upload) {
  const bool delivered = upload && upload->success;
  if (delivered) {
    if (upload->sn >= state.size()) {
      throw std::invalid_argument("advance_uav_lifetimes: SN index out of range");
    }
    if (!state.sn_lifetime[upload->sn]) {
      throw std::invalid_argument(
          "advance_uav_lifetimes: successful upload from an empty SN buffer");
    }
  }
  for (std::size_t n = 0; n < state.size(); ++n) {
    if (delivered && n == upload->sn) {
      state.uav_lifetime[n] = *state.sn_lifetime[n] + 1;
      state.sn_lifetime[n].reset();
    } else if (state.uav_lifetime[n]) {
      ++*state.uav_lifetime[n];
    }
  }
  return state;
}

FreshnessState advance_aoi(FreshnessState state, bool offload_success) {
  for (std::size_t n = 0; n < state.size(); ++n) {
    auto& u = state.uav_lifetime[n];
    if (offload_success && u) {
      state.aoi[n] = *u;
      u.reset();
    } else {
      ++state.aoi[n];
    }
  }
  return state;
}

double buffer_bits(const FreshnessState& state, double packet_bits) {
  return static_cast<double>(state.uav_packet_count()) * packet_bits;
}

}  // namespace suav
