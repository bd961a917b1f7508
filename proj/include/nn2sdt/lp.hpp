#pragma once

// Affine forms, halfspace systems with strict and non-strict relations, and
// a small simplex-based LP kernel answering feasibility and optimization
// queries over them.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace nn2sdt {

inline constexpr double kDefaultEps = 1e-9;

/// Tolerance used when re-checking LP witnesses by direct substitution.
inline constexpr double kWitnessTolerance = 1e-7;

/// Every LP variable is confined to |x_k| <= kAmbientBound. A polyhedron
/// that only has points outside this cube is reported empty.
inline constexpr double kAmbientBound = 1e6;

/// w^T x + b over R^n.
struct AffineFunc {
  std::vector<double> weights;
  double bias = 0.0;

  AffineFunc() = default;
  AffineFunc(std::vector<double> w, double b) : weights(std::move(w)), bias(b) {}

  static AffineFunc constant(std::size_t dim, double value) { return {std::vector<double>(dim, 0.0), value}; }
  static AffineFunc coordinate(std::size_t dim, std::size_t k);

  std::size_t dim() const noexcept { return weights.size(); }
  bool is_constant() const noexcept;

  // Sums left to right, then adds the bias. Network inference uses the same
  // order so first-layer splits evaluate bit-identically.
  double operator()(std::span<const double> x) const;

  AffineFunc& operator+=(const AffineFunc& other);
  AffineFunc& operator-=(const AffineFunc& other);
  AffineFunc& operator*=(double s);

  friend AffineFunc operator+(AffineFunc a, const AffineFunc& b) { return a += b; }
  friend AffineFunc operator-(AffineFunc a, const AffineFunc& b) { return a -= b; }
  friend AffineFunc operator*(double s, AffineFunc a) { return a *= s; }
  AffineFunc operator-() const;

  bool operator==(const AffineFunc&) const = default;
};

enum class Relation { leq, gt };

/// {x : func(x) <= 0} or {x : func(x) > 0}.
struct HalfSpace {
  AffineFunc func;
  Relation relation = Relation::leq;

  bool contains(std::span<const double> x) const;
  HalfSpace complement() const { return {func, relation == Relation::leq ? Relation::gt : Relation::leq}; }
  bool is_strict() const noexcept { return relation == Relation::gt; }

  bool operator==(const HalfSpace&) const = default;
};

/// Conjunction of halfspaces. No constraints means all of R^n.
class Polyhedron {
 public:
  explicit Polyhedron(std::size_t dim) : dim_(dim) {}
  Polyhedron(std::size_t dim, std::vector<HalfSpace> constraints);

  /// Axis-aligned box as non-strict constraints.
  static Polyhedron box(std::span<const double> lower, std::span<const double> upper);

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<HalfSpace>& constraints() const noexcept { return constraints_; }
  bool empty_constraint_list() const noexcept { return constraints_.empty(); }

  void add(HalfSpace h);
  Polyhedron with(HalfSpace h) const;
  Polyhedron intersect(const Polyhedron& other) const;

  bool contains(std::span<const double> x) const;

  bool operator==(const Polyhedron&) const = default;

 private:
  std::size_t dim_;
  std::vector<HalfSpace> constraints_;
};

struct LpOutcome {
  enum class Status { infeasible, feasible, optimal, unbounded };
  Status status = Status::infeasible;
  double value = 0.0;
  std::vector<double> witness;
};

std::string to_string(LpOutcome::Status s);

struct Feasibility {
  bool feasible = false;
  // Largest common margin by which the strict constraints can be satisfied,
  // measured after normalizing each constraint to a unit weight vector.
  // +inf when the polyhedron has no strict constraint.
  double margin = -std::numeric_limits<double>::infinity();
  std::vector<double> witness;

  explicit operator bool() const noexcept { return feasible; }
};

/// Strict constraints f > 0 are rewritten f >= t with a shared slack t that
/// is maximized; the set counts as non-empty when t exceeds eps.
Feasibility check_feasibility(const Polyhedron& p, double eps = kDefaultEps);

inline bool is_feasible(const Polyhedron& p, double eps = kDefaultEps) { return check_feasibility(p, eps).feasible; }

/// Supremum of obj over p with strict constraints relaxed to non-strict.
LpOutcome maximize(const AffineFunc& obj, const Polyhedron& p);

/// Checks x against every constraint of p; non-strict ones may be violated by
/// at most tol. Strict ones must hold exactly.
bool satisfies_within(const Polyhedron& p, std::span<const double> x, double tol = kWitnessTolerance);

namespace detail {

/// max c^T x s.t. rows[i].a^T x <= rows[i].b and |x_k| <= kAmbientBound.
struct LpRow {
  std::vector<double> a;
  double b = 0.0;
};

struct LpSolution {
  enum class Status { infeasible, optimal, unbounded };
  Status status = Status::infeasible;
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
};

LpSolution solve(std::span<const LpRow> rows, std::span<const double> c);

}  // namespace detail
}  // namespace nn2sdt
