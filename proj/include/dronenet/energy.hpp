#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "dronenet/error.hpp"

namespace dronenet::energy {

// Physical description of one (identical) drone. Defaults are the base-case
// multirotor parameters; rotor count, drag and gravity are not part of that set
// and default to a quadcopter, no drag and standard gravity.
struct PhysicsParams {
  double rotor_diameter_m = 0.254;
  double drone_mass_kg = 2.07;
  double ground_speed_mps = 10.0;
  double pitch_angle_rad = 0.0139;
  double power_efficiency = 0.7;
  double air_density_kgpm3 = 1.2193;
  int rotor_count = 4;
  double drag_force_N = 0.0;
  double gravity_mps2 = 9.81;
};

// Energy drawn per time step in each flight mode.
struct PowerRates {
  double hover = 0.0;
  double forward = 0.0;
  double facilities = 0.0;

  friend bool operator==(const PowerRates&, const PowerRates&) = default;
};

inline void validate(const PhysicsParams& p) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(std::isfinite(p.rotor_diameter_m) && p.rotor_diameter_m > 0,
          "rotor diameter must be > 0");
  require(std::isfinite(p.drone_mass_kg) && p.drone_mass_kg > 0, "drone mass must be > 0");
  require(std::isfinite(p.ground_speed_mps) && p.ground_speed_mps > 0,
          "ground speed must be > 0");
  require(std::isfinite(p.pitch_angle_rad) && p.pitch_angle_rad >= 0 &&
              p.pitch_angle_rad < std::numbers::pi / 2,
          "pitch angle must lie in [0, pi/2)");
  require(std::isfinite(p.power_efficiency) && p.power_efficiency > 0 &&
              p.power_efficiency <= 1,
          "power efficiency must lie in (0, 1]");
  require(std::isfinite(p.air_density_kgpm3) && p.air_density_kgpm3 > 0,
          "air density must be > 0");
  require(p.rotor_count > 0, "rotor count must be positive");
  require(std::isfinite(p.drag_force_N) && p.drag_force_N >= 0, "drag force must be >= 0");
  require(std::isfinite(p.gravity_mps2) && p.gravity_mps2 > 0, "gravity must be > 0");
}

// Total downward load the rotors must balance.
inline double thrust_load(const PhysicsParams& p) {
  return p.drone_mass_kg * p.gravity_mps2 + p.drag_force_N;
}

// Right-hand side of the induced-velocity fixed point equation
//   v_s = 2 W / (pi c D^2 rho sqrt((v cos a)^2 + (v sin a + v_s)^2)).
inline double induced_velocity_rhs(const PhysicsParams& p, double v_s) {
  const double d2 = p.rotor_diameter_m * p.rotor_diameter_m;
  const double horiz = p.ground_speed_mps * std::cos(p.pitch_angle_rad);
  const double vert = p.ground_speed_mps * std::sin(p.pitch_angle_rad) + v_s;
  return 2.0 * thrust_load(p) /
         (std::numbers::pi * p.rotor_count * d2 * p.air_density_kgpm3 *
          std::sqrt(horiz * horiz + vert * vert));
}

// Solves for the induced velocity by bisection on r(v) = v - rhs(v), which is
// strictly increasing in v (rhs is decreasing), negative at 0 and positive
// for large v. The upper bracket grows geometrically until r changes sign.
inline double solve_induced_velocity(const PhysicsParams& p) {
  validate(p);
  auto residual = [&](double v) { return v - induced_velocity_rhs(p, v); };

  double lo = 0.0;
  double hi = 1.0;
  int grow = 0;
  while (residual(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 200) throw SolverError("induced velocity bracket not found", residual(hi));
  }
  constexpr int kMaxIter = 400;
  for (int i = 0; i < kMaxIter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval exhausted at double precision
    if (residual(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double v = std::abs(residual(lo)) <= std::abs(residual(hi)) ? lo : hi;
  const double r = residual(v);
  if (!(v > 0.0) || std::abs(r) > 1e-9)
    throw SolverError("induced velocity bisection did not converge", r);
  return v;
}

inline double hover_power(const PhysicsParams& p) {
  validate(p);
  const double d2 = p.rotor_diameter_m * p.rotor_diameter_m;
  return std::pow(thrust_load(p), 1.5) /
         (p.power_efficiency *
          std::sqrt(0.5 * std::numbers::pi * p.rotor_count * d2 * p.air_density_kgpm3));
}

inline double forward_power(const PhysicsParams& p, double induced_velocity) {
  validate(p);
  if (!(induced_velocity > 0.0)) throw UsageError("induced velocity must be > 0");
  return thrust_load(p) *
         (p.ground_speed_mps * std::sin(p.pitch_angle_rad) + induced_velocity) /
         p.power_efficiency;
}

// Physical hover/forward rates. Facilities draw is payload-specific and has
// no physical model here, so it is reported as zero.
inline PowerRates physical_rates(const PhysicsParams& p) {
  return {hover_power(p), forward_power(p, solve_induced_velocity(p)), 0.0};
}

// The proportionally scaled rates every simulation runs with.
constexpr PowerRates scaled_rates() { return {4.0, 2.5, 3.0}; }

}  // namespace dronenet::energy
