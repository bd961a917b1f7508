#pragma once

// Test-only reference computations. Nothing here calls into the LP kernel or
// the transformation; each oracle answers its question by enumeration,
// sampling or direct scalar evaluation.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "nn2sdt/lp.hpp"

namespace oracle {

// Dense grid search for a 2-D polyhedron over [lo, hi]^2 with spacing h.
// Constraints are shifted by `shift` times the weight norm: shift < 0 asks
// for a margin (tightened set), shift > 0 loosens every constraint. Strict
// and non-strict relations are both treated as non-strict after shifting,
// except constant constraints which are decided exactly.
//
// For each grid column x the admissible y values form an interval, so the
// search is exact over the grid while costing one pass over the columns.
inline bool grid_feasible_2d(const nn2sdt::Polyhedron& p, double shift, double lo = -10.0, double hi = 10.0,
                             double h = 1e-3) {
  const auto steps = static_cast<std::int64_t>(std::llround((hi - lo) / h));
  for (std::int64_t ix = 0; ix <= steps; ++ix) {
    const double x = lo + static_cast<double>(ix) * h;
    double ylo = lo;
    double yhi = hi;
    bool ok = true;
    for (const auto& c : p.constraints()) {
      const double a = c.func.weights[0];
      const double b = c.func.weights[1];
      const double k = c.func.bias;
      const double norm = std::hypot(a, b);
      if (norm == 0.0) {
        ok = c.relation == nn2sdt::Relation::leq ? k <= 0.0 : k > 0.0;
        if (!ok) break;
        continue;
      }
      // leq: a x + b y + k <= shift*norm ; gt: a x + b y + k >= -shift*norm
      const bool leq = c.relation == nn2sdt::Relation::leq;
      const double rhs = leq ? shift * norm - k - a * x : -shift * norm - k - a * x;
      // leq: b y <= rhs ; gt: b y >= rhs
      if (b == 0.0) {
        ok = leq ? 0.0 <= rhs : 0.0 >= rhs;
        if (!ok) break;
        continue;
      }
      const double bound = rhs / b;
      const bool upper = (leq && b > 0.0) || (!leq && b < 0.0);
      if (upper)
        yhi = std::min(yhi, bound);
      else
        ylo = std::max(ylo, bound);
    }
    if (!ok || ylo > yhi) continue;
    const double first = std::ceil((ylo - lo) / h - 1e-9);
    if (lo + first * h <= yhi + 1e-12) return true;
  }
  return false;
}

enum class GridVerdict { feasible, infeasible, ambiguous };

// Margin 2h: a feasible set of positive thickness contains a tightened grid
// point; an empty set leaves the loosened grid empty. Anything else is a
// region thinner than the grid resolution.
inline GridVerdict grid_verdict_2d(const nn2sdt::Polyhedron& p, double h = 1e-3) {
  if (grid_feasible_2d(p, -2.0 * h, -10.0, 10.0, h)) return GridVerdict::feasible;
  if (!grid_feasible_2d(p, 2.0 * h, -10.0, 10.0, h)) return GridVerdict::infeasible;
  return GridVerdict::ambiguous;
}

// Random 2-D polyhedron: up to max_constraints halfspaces with integer
// coefficients in [-3, 3], random strictness, intersected with [-10, 10]^2.
inline nn2sdt::Polyhedron random_int_polyhedron_2d(std::mt19937_64& rng, int max_constraints = 6) {
  std::uniform_int_distribution<int> coef(-3, 3);
  std::uniform_int_distribution<int> count(1, max_constraints);
  std::bernoulli_distribution strict(0.5);
  const std::vector<double> lo{-10.0, -10.0}, hi{10.0, 10.0};
  nn2sdt::Polyhedron p = nn2sdt::Polyhedron::box(lo, hi);
  const int k = count(rng);
  for (int i = 0; i < k; ++i) {
    nn2sdt::AffineFunc f({double(coef(rng)), double(coef(rng))}, double(coef(rng)));
    p.add({f, strict(rng) ? nn2sdt::Relation::gt : nn2sdt::Relation::leq});
  }
  return p;
}

}  // namespace oracle
