#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "suav/random.hpp"

namespace suav {

inline constexpr double kDefaultPacketBits = 10240.0;

/// Per-SN packet lifetimes and AoI, indexed 0..N-1 for SN 1..N.
/// An empty optional means "no packet held".
struct FreshnessState {
  std::vector<std::optional<int>> sn_lifetime;   // Y_n
  std::vector<std::optional<int>> uav_lifetime;  // U_n
  std::vector<int> aoi;                          // delta_n

  static FreshnessState initial(std::size_t n_sns, int initial_aoi = 0);
  std::size_t size() const { return aoi.size(); }
  std::size_t uav_packet_count() const;

  friend bool operator==(const FreshnessState&, const FreshnessState&) = default;
};

/// Result of scheduling one SN in a slot.
struct UploadEvent {
  std::size_t sn = 0;  // zero-based SN index
  bool success = false;
};

/// Per-slot Bernoulli(rate) arrivals; throws when rate is outside [0, 1].
std::vector<std::uint8_t> sample_arrivals(std::size_t n_sns, double rate, Rng& rng);

FreshnessState advance_sn_lifetimes(FreshnessState state,
                                    const std::vector<std::uint8_t>& arrivals);

/// A successful upload moves the SN's packet into the UAV buffer (replacing
/// any older one); every other held packet ages by one slot.
FreshnessState advance_uav_lifetimes(FreshnessState state,
                                     std::optional<UploadEvent> upload);

/// A successful offload delivers every held packet to the DC and empties the
/// UAV buffer; SNs with nothing delivered age by one slot.
FreshnessState advance_aoi(FreshnessState state, bool offload_success);

double buffer_bits(const FreshnessState& state,
                   double packet_bits = kDefaultPacketBits);

}  // namespace suav
