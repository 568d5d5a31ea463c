#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "suav/channel.hpp"
#include "suav/energy.hpp"
#include "suav/world.hpp"

using namespace suav;

namespace {

double rel_err(double got, const oracle::Real& want) {
  const double w = want.convert_to<double>();
  return std::abs(got - w) / std::max(std::abs(w), 1e-300);
}

}  // namespace

TEST_CASE("clamp_action keeps speed and heading feasible") {
  KinematicLimits lim;
  UavKinematics kin;
  kin.speed = 10.0;
  kin.heading = 1.0;

  auto c = clamp_action(0.0, 0.0, kin, lim);
  CHECK(c.speed_next == doctest::Approx(10.0));
  CHECK(c.heading == doctest::Approx(1.0));

  c = clamp_action(1e6, 0.0, kin, lim);
  CHECK(c.speed_next == 20.0);

  c = clamp_action(0.0, 50.0, kin, lim);
  CHECK(c.turn == doctest::Approx(std::numbers::pi / 3.0));

  c = clamp_action(std::nan(""), std::nan(""), kin, lim);
  CHECK(c.speed_next == doctest::Approx(10.0));
  CHECK(c.turn == 0.0);

  // The first slot picks any heading.
  c = clamp_action(0.0, 0.0, kin, lim, false);
  CHECK(c.heading == doctest::Approx(std::numbers::pi));
}

TEST_CASE("clamp fuzz stays within limits") {
  KinematicLimits lim;
  UavKinematics kin;
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const auto c = clamp_action(rng.normal() * 5, rng.normal() * 5, kin, lim);
    REQUIRE(c.speed_next >= 0.0);
    REQUIRE(c.speed_next <= lim.max_speed);
    REQUIRE(std::abs(c.turn) <= lim.max_turn + 1e-12);
    REQUIRE(c.heading >= 0.0);
    REQUIRE(c.heading < 2 * std::numbers::pi);
    const auto next = step_kinematics(kin, c.speed_next, c.heading, lim);
    REQUIRE((next.position - kin.position).norm() <= lim.max_speed * lim.slot_seconds + 1e-9);
    kin = next;
  }
}

TEST_CASE("step_kinematics uses the trapezoidal displacement") {
  KinematicLimits lim;
  UavKinematics kin;
  kin.speed = 10.0;
  auto next = step_kinematics(kin, 20.0, 0.0, lim);
  CHECK(next.position.x == doctest::Approx(7.5));
  CHECK(next.position.y == doctest::Approx(0.0));
  CHECK(next.speed == 20.0);

  kin.speed = 20.0;
  next = step_kinematics(kin, 20.0, std::numbers::pi / 2, lim);
  CHECK(next.position.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(next.position.y == doctest::Approx(10.0));

  kin.speed = 0.0;
  next = step_kinematics(kin, 0.0, 2.0, lim);
  CHECK(next.position == kin.position);
}

TEST_CASE("slant distance") {
  UavKinematics kin;
  kin.position = {50, 50};
  CHECK(slant_distance(kin, {50, 50}) == 100.0);
  CHECK(slant_distance(kin, {250, 50}) == doctest::Approx(223.60679775));
  kin.altitude = 0.0;
  CHECK(slant_distance(kin, {80, 50}) == doctest::Approx(30.0));
}

TEST_CASE("layout validation") {
  NodeLayout l;
  CHECK_THROWS(l.validate());
  l.sn_positions = {{10, 10}};
  CHECK_NOTHROW(l.validate());
  l.sn_positions.push_back({-1, 10});
  CHECK_THROWS(l.validate());
}

TEST_CASE("LoS probability against the high-precision oracle") {
  ChannelParams p;
  CHECK(los_probability(100, 100, p) == doctest::Approx(0.99978535).epsilon(1e-7));
  CHECK(los_probability(223.607, 100, p) == doctest::Approx(0.3930227).epsilon(1e-6));
  for (int i = 0; i < 100; ++i) {
    const double d = 100.0 + 5.0 * i;
    CHECK(rel_err(los_probability(d, 100, p), oracle::los(oracle::Real(d), 100)) < 1e-9);
  }
  CHECK(los_probability(150, 100, p) > los_probability(160, 100, p));
  CHECK_THROWS(los_probability(50, 100, p));
  CHECK_THROWS(los_probability(50, 0, p));
}

TEST_CASE("gains, SNR and rate") {
  ChannelParams p;
  const double g = large_scale_gain(100, true, p);
  CHECK(g == doctest::Approx(2.51188643e-11).epsilon(1e-8));
  CHECK(large_scale_gain(100, false, p) == doctest::Approx(0.2 * g));

  ChannelDraw draw{true, 1.0, g};
  CHECK(upload_snr(draw, p) == doctest::Approx(12.559).epsilon(1e-4));
  CHECK(upload_succeeds(draw, p));
  CHECK(offload_rate(draw, p) == doctest::Approx(3.98918e7).epsilon(1e-5));
  CHECK(offload_succeeds(draw, 204800, 0.5, p));

  ChannelDraw zero{false, 0.0, 0.0};
  CHECK_FALSE(upload_succeeds(zero, p));
  CHECK_FALSE(offload_succeeds(zero, 10240, 0.5, p));
  CHECK(offload_succeeds(zero, 0, 0.5, p));

  ChannelDraw edge{true, 1.0, p.noise_power * p.snr_threshold / p.sn_tx_power};
  CHECK(upload_succeeds(edge, p));

  for (int i = 0; i < 100; ++i) {
    const double d = 100.0 + 3.0 * i;
    const auto want = oracle::gain_los(oracle::Real(d));
    const double got = large_scale_gain(d, true, p);
    CHECK(rel_err(got, want) < 1e-9);
    ChannelDraw dr{true, 1.0, got};
    CHECK(rel_err(upload_snr(dr, p), oracle::snr(want)) < 1e-9);
    CHECK(rel_err(offload_rate(dr, p), oracle::rate(want)) < 1e-9);
  }
}

TEST_CASE("Monte Carlo channel statistics") {
  ChannelParams p;
  Rng rng(11);
  const double d = 180.0, h = 100.0;
  const double plos = los_probability(d, h, p);
  const int n = 1000000;
  double los = 0, fading = 0, gain = 0;
  for (int i = 0; i < n; ++i) {
    const auto dr = sample_gain(d, h, p, rng);
    los += dr.is_los;
    fading += dr.small_scale_power;
    gain += dr.gain;
  }
  const double se = std::sqrt(plos * (1 - plos) / n);
  CHECK(std::abs(los / n - plos) < 3 * se);
  CHECK(std::abs(fading / n - 1.0) < 0.01);
  const double g = large_scale_gain(d, true, p);
  const double expect = plos * g + (1 - plos) * p.kappa * g;
  CHECK(std::abs(gain / n - expect) / expect < 0.01);
}

TEST_CASE("propulsion against the high-precision oracle") {
  PowerParams p;
  CHECK(rotor_thrust(0, 0, p) == doctest::Approx(4.9));
  CHECK(rotor_thrust(20, 0, p) == doctest::Approx(8.1121).epsilon(1e-4));
  CHECK(propulsion_power(0, 0, p) == doctest::Approx(172.3876).epsilon(1e-6));
  CHECK(propulsion_terms(0, 0, p).parasite == 0.0);
  CHECK(rotor_thrust(10, 3, p) > rotor_thrust(10, 1, p));
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double v = 2.0 * i + 0.5;
      const double a = -20.0 + 4.0 * j;
      CHECK(rel_err(rotor_thrust(v, a, p), oracle::thrust(v, a)) < 1e-9);
      CHECK(rel_err(propulsion_power(v, a, p), oracle::power(v, a)) < 1e-9);
    }
  }
}

TEST_CASE("induced power rolls off with speed at fixed thrust") {
  // Evaluate the induced term with thrust pinned, by hand, at two speeds.
  PowerParams p;
  const double t = 6.0, rho = p.air_density_rho, a = p.disc_area_A;
  const auto induced = [&](double v) {
    const double v2 = v * v;
    return t * std::sqrt(std::sqrt(t * t / (4 * rho * rho * a * a) + v2 * v2 / 4) - v2 / 2);
  };
  for (double v = 0.0; v < 20.0; v += 1.0) CHECK(induced(v + 0.01) < induced(v));
}

TEST_CASE("slot energy cases") {
  PowerParams p;
  BatteryParams b;
  const double hover = propulsion_power(0, 0, p);
  CHECK(slot_energy(Mode::restoring, 500, true, true, 0, 0, p, b, 0.5, 0.25) == 0.0);
  CHECK(slot_energy(Mode::working, 5000, false, true, 0, 0, p, b, 0.5, 0.25) ==
        doctest::Approx(0.5 * (hover + 1)));
  CHECK(slot_energy(Mode::working, 5000, true, true, 0, 0, p, b, 0.5, 0.25) ==
        doctest::Approx(0.5 * hover + 0.25));
  CHECK(slot_energy(Mode::working, 5000, true, false, 0, 0, p, b, 0.5, 0.25) ==
        doctest::Approx(0.5 * hover));
}

TEST_CASE("harvest") {
  HarvestParams hp;
  CHECK(solar_energy(100, hp, 0.5) == doctest::Approx(23.7649).epsilon(1e-5));
  CHECK(solar_energy(0, hp, 0.5) == doctest::Approx(23.6316).epsilon(1e-5));
  for (int i = 0; i < 100; ++i) {
    const double h = 10.0 * i;
    CHECK(rel_err(solar_energy(h, hp, 0.5), oracle::solar(h)) < 1e-9);
  }
  hp.arrival_prob = 0.0;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(harvest(100, hp, 0.5, rng) == 0.0);
  CHECK_THROWS(harvest(-1, hp, 0.5, rng));
}

TEST_CASE("battery dynamics and hysteresis") {
  BatteryParams bp;
  auto u = update_battery({5990, Mode::working}, 23.77, 0, bp);
  CHECK(u.state.level == 6000.0);

  u = update_battery({1100, Mode::working}, 0, 86.7, bp);
  CHECK(u.state.level == doctest::Approx(1013.3));
  CHECK(u.state.mode == Mode::working);

  u = update_battery({2990, Mode::restoring}, 23.63, 0, bp);
  CHECK(u.state.level == doctest::Approx(3013.63));
  CHECK(u.state.mode == Mode::working);

  u = update_battery({2000, Mode::restoring}, 23.63, 0, bp);
  CHECK(u.state.mode == Mode::restoring);

  u = update_battery({1010, Mode::working}, 0, 20, bp);
  CHECK(u.state.mode == Mode::restoring);

  u = update_battery({50, Mode::working}, 0, 80, bp);
  CHECK(u.energy_exhausted);
  CHECK(u.state.level == 0.0);
  CHECK(u.state.mode == Mode::restoring);
}
