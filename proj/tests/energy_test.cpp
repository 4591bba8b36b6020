#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dronenet/energy.hpp"
#include "dronenet/rng.hpp"

namespace {

using namespace dronenet;
using energy::PhysicsParams;

// Reference values from a 50-digit bisection of the induced-velocity
// equation and direct evaluation of the hover/forward formulas, base-case
// parameters, c = 4, F_drag = 0, g = 9.81.
constexpr double kInducedVelocity = 3.8202891735038241089;
constexpr double kHoverPower = 185.94394962318758875;
constexpr double kForwardPower = 114.85715223862275928;
constexpr double kInducedVelocityDoubleDensity = 2.0086312329952256048;

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

TEST(Energy, InducedVelocityMatchesHighPrecisionReference) {
  const double v = energy::solve_induced_velocity({});
  EXPECT_LT(std::abs(v - energy::induced_velocity_rhs({}, v)), 1e-9);
  EXPECT_LT(rel_err(v, kInducedVelocity), 1e-12);
}

TEST(Energy, InducedVelocityDecreasesWithAirDensity) {
  PhysicsParams dense;
  dense.air_density_kgpm3 *= 2;
  const double v = energy::solve_induced_velocity(dense);
  EXPECT_LT(v, energy::solve_induced_velocity({}));
  EXPECT_LT(rel_err(v, kInducedVelocityDoubleDensity), 1e-12);
}

TEST(Energy, InducedVelocityResidualOnRandomParameters) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    PhysicsParams p;
    p.rotor_diameter_m = 0.05 + rng.uniform();
    p.drone_mass_kg = 0.1 + 20 * rng.uniform();
    p.ground_speed_mps = 0.1 + 30 * rng.uniform();
    p.pitch_angle_rad = 1.5 * rng.uniform();
    p.power_efficiency = 0.05 + 0.95 * rng.uniform();
    p.air_density_kgpm3 = 0.3 + 1.2 * rng.uniform();
    p.rotor_count = 1 + static_cast<int>(rng.below(8));
    p.drag_force_N = 5 * rng.uniform();
    const double v = energy::solve_induced_velocity(p);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(std::abs(v - energy::induced_velocity_rhs(p, v)), 1e-9) << "sample " << i;
  }
}

TEST(Energy, HoverPowerMatchesReference) {
  EXPECT_LT(rel_err(energy::hover_power({}), kHoverPower), 1e-9);
}

TEST(Energy, ForwardPowerMatchesReference) {
  const double v = energy::solve_induced_velocity({});
  EXPECT_LT(rel_err(energy::forward_power({}, v), kForwardPower), 1e-9);
}

TEST(Energy, HoverPowerScaling) {
  PhysicsParams p;
  PhysicsParams eff = p;
  eff.power_efficiency = 0.35;
  EXPECT_DOUBLE_EQ(energy::hover_power(eff), 2 * energy::hover_power(p));

  PhysicsParams heavy = p;
  heavy.drone_mass_kg *= 4;
  EXPECT_NEAR(energy::hover_power(heavy) / energy::hover_power(p), 8.0, 1e-12);
}

TEST(Energy, ForwardPowerLimitsAndScaling) {
  PhysicsParams p;
  p.pitch_angle_rad = 0;
  const double v = energy::solve_induced_velocity(p);
  EXPECT_DOUBLE_EQ(energy::forward_power(p, v), energy::thrust_load(p) * v / p.power_efficiency);

  PhysicsParams q;
  const double vq = energy::solve_induced_velocity(q);
  PhysicsParams q2 = q;
  q2.power_efficiency = q.power_efficiency / 2;
  EXPECT_DOUBLE_EQ(energy::forward_power(q2, vq), 2 * energy::forward_power(q, vq));
}

TEST(Energy, HoverPowerMonotonicity) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    PhysicsParams p;
    p.drone_mass_kg = 0.5 + 5 * rng.uniform();
    p.drag_force_N = 2 * rng.uniform();
    const double base = energy::hover_power(p);
    auto bumped = [&](auto field, double factor) {
      PhysicsParams q = p;
      q.*field *= factor;
      return energy::hover_power(q);
    };
    EXPECT_GT(bumped(&PhysicsParams::drone_mass_kg, 1.1), base);
    PhysicsParams drag = p;
    drag.drag_force_N += 0.5;
    EXPECT_GT(energy::hover_power(drag), base);
    EXPECT_LT(bumped(&PhysicsParams::power_efficiency, 0.9) , bumped(&PhysicsParams::power_efficiency, 0.8));
    EXPECT_LT(bumped(&PhysicsParams::rotor_diameter_m, 1.1), base);
    EXPECT_LT(bumped(&PhysicsParams::air_density_kgpm3, 1.1), base);
    PhysicsParams more = p;
    more.rotor_count += 2;
    EXPECT_LT(energy::hover_power(more), base);
  }
}

TEST(Energy, ScaledRates) {
  constexpr auto r = energy::scaled_rates();
  EXPECT_EQ(r.hover, 4.0);
  EXPECT_EQ(r.forward, 2.5);
  EXPECT_EQ(r.facilities, 3.0);
  EXPECT_GT(r.hover, r.forward);
  EXPECT_EQ(r.hover + r.facilities, 7.0);
  EXPECT_EQ(energy::scaled_rates(), r);
}

TEST(Energy, RejectsInvalidParameters) {
  PhysicsParams p;
  p.power_efficiency = 0;
  EXPECT_THROW(energy::hover_power(p), ConfigError);
  p = {};
  p.power_efficiency = 1.5;
  EXPECT_THROW(energy::hover_power(p), ConfigError);
  p = {};
  p.pitch_angle_rad = std::numbers::pi / 2;
  EXPECT_THROW(energy::solve_induced_velocity(p), ConfigError);
  p = {};
  p.drag_force_N = -1;
  EXPECT_THROW(energy::hover_power(p), ConfigError);
  p = {};
  p.rotor_count = 0;
  EXPECT_THROW(energy::hover_power(p), ConfigError);
}

}  // namespace
