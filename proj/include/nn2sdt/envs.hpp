#pragma once

// Closed-loop benchmark dynamics with pointwise stepping and sound interval
// images of boxes.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nn2sdt/box.hpp"
#include "nn2sdt/lp.hpp"

namespace nn2sdt {

/// Closed interval with outward-rounded arithmetic.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double l, double h);  // checks l <= h
  static Interval point(double v) { return {v, v}; }

  double width() const noexcept { return hi - lo; }
  bool contains(double v) const noexcept { return lo <= v && v <= hi; }
  bool contains(const Interval& o) const noexcept { return lo <= o.lo && o.hi <= hi; }

  bool operator==(const Interval&) const = default;
};

Interval operator+(const Interval& a, const Interval& b);
Interval operator-(const Interval& a, const Interval& b);
Interval operator-(const Interval& a);
Interval operator*(const Interval& a, const Interval& b);
Interval operator*(double s, const Interval& a);
/// Throws StructuralError when b contains 0.
Interval operator/(const Interval& a, const Interval& b);
Interval sqr(const Interval& a);
Interval sin(const Interval& a);
Interval cos(const Interval& a);
Interval hull(const Interval& a, const Interval& b);
Interval clamp(const Interval& a, double lo, double hi);

/// Affine lower and upper bounds of cos on a bracket, as functions of one
/// scalar variable.
struct CosBounds {
  AffineFunc lower;
  AffineFunc upper;
};

/// Chord and midpoint tangent. On [-pi/2, pi/2], where cos is concave, the
/// chord is the lower bound and the tangent the upper one; on [pi/2, 3pi/2]
/// the roles swap. Other brackets must lie in a shift of one of these by a
/// multiple of 2pi. Throws StructuralError when x_l > x_r or the bracket
/// straddles a regime boundary.
CosBounds cos_bounds(double x_l, double x_r);

/// Enclosure of cos over [a.lo, a.hi] built from cos_bounds: the bracket is
/// cut at odd multiples of pi/2 and the pieces' bounds are joined.
Interval cos_enclosure(const Interval& a);

struct MountainCarParams {
  double alpha = 0.001;
  double beta = 0.0025;
  double gamma = 3.0;
  double pos_min = -1.2;
  double pos_max = 0.6;
  double vel_max = 0.07;     // velocity is clipped to [-vel_max, vel_max]
  bool clip = true;          // in step and box_step alike
  bool gym_order = false;    // position moves with the updated velocity
};

struct CartPoleParams {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double length = 0.5;
  double force = 10.0;
  double tau = 0.02;
};

/// State (pos, vel), u in {0, 1, 2}. Paper order: pos' = pos + vel with the
/// velocity before its update.
std::vector<double> mountaincar_step(const MountainCarParams& p, std::span<const double> x, int u);
Box mountaincar_box_step(const MountainCarParams& p, const Box& b, int u);

/// State (x, x_dot, theta, theta_dot), u in {0, 1}. Euler step of the
/// standard cart-pole equations.
std::vector<double> cartpole_step(const CartPoleParams& p, std::span<const double> x, int u);
Box cartpole_box_step(const CartPoleParams& p, const Box& b, int u);

/// One benchmark system. Controller actions are 1-based; action a applies
/// u = a - 1.
class EnvModel {
 public:
  explicit EnvModel(MountainCarParams p) : params_(p) {}
  explicit EnvModel(CartPoleParams p) : params_(p) {}

  static EnvModel mountaincar() { return EnvModel(MountainCarParams{}); }
  static EnvModel cartpole() { return EnvModel(CartPoleParams{}); }

  std::string name() const;
  std::size_t state_dim() const noexcept;
  std::size_t action_count() const noexcept;
  bool is_mountaincar() const noexcept { return std::holds_alternative<MountainCarParams>(params_); }
  const MountainCarParams& mountaincar_params() const { return std::get<MountainCarParams>(params_); }
  const CartPoleParams& cartpole_params() const { return std::get<CartPoleParams>(params_); }

  std::vector<double> step(std::span<const double> x, std::size_t action) const;
  Box box_step(const Box& b, std::size_t action) const;

 private:
  std::variant<MountainCarParams, CartPoleParams> params_;
};

/// {"name": "mountaincar"|"cartpole", <parameter overrides>}. A bare string
/// selects the defaults.
EnvModel env_from_json(const nlohmann::json& doc);
nlohmann::json env_to_json(const EnvModel& env);

}  // namespace nn2sdt
