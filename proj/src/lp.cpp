#include "nn2sdt/lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nn2sdt/errors.hpp"

namespace nn2sdt {

AffineFunc AffineFunc::coordinate(std::size_t dim, std::size_t k) {
  if (k >= dim) throw StructuralError("coordinate index out of range");
  AffineFunc f = constant(dim, 0.0);
  f.weights[k] = 1.0;
  return f;
}

bool AffineFunc::is_constant() const noexcept {
  return std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });
}

double AffineFunc::operator()(std::span<const double> x) const {
  if (x.size() != weights.size()) throw StructuralError("affine function evaluated at a point of the wrong dimension");
  double acc = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * x[j];
  return acc + bias;
}

AffineFunc& AffineFunc::operator+=(const AffineFunc& other) {
  if (other.dim() != dim()) throw StructuralError("affine dimension mismatch");
  for (std::size_t j = 0; j < weights.size(); ++j) weights[j] += other.weights[j];
  bias += other.bias;
  return *this;
}

AffineFunc& AffineFunc::operator-=(const AffineFunc& other) {
  if (other.dim() != dim()) throw StructuralError("affine dimension mismatch");
  for (std::size_t j = 0; j < weights.size(); ++j) weights[j] -= other.weights[j];
  bias -= other.bias;
  return *this;
}

AffineFunc& AffineFunc::operator*=(double s) {
  for (double& w : weights) w *= s;
  bias *= s;
  return *this;
}

AffineFunc AffineFunc::operator-() const {
  AffineFunc f = *this;
  f *= -1.0;
  return f;
}

bool HalfSpace::contains(std::span<const double> x) const {
  const double v = func(x);
  return relation == Relation::leq ? v <= 0.0 : v > 0.0;
}

Polyhedron::Polyhedron(std::size_t dim, std::vector<HalfSpace> constraints) : dim_(dim) {
  constraints_.reserve(constraints.size());
  for (auto& h : constraints) add(std::move(h));
}

Polyhedron Polyhedron::box(std::span<const double> lower, std::span<const double> upper) {
  if (lower.size() != upper.size()) throw StructuralError("box bounds differ in dimension");
  const std::size_t n = lower.size();
  Polyhedron p(n);
  for (std::size_t k = 0; k < n; ++k) {
    // x_k - hi <= 0 and lo - x_k <= 0
    AffineFunc up = AffineFunc::coordinate(n, k);
    up.bias = -upper[k];
    AffineFunc lo = -AffineFunc::coordinate(n, k);
    lo.bias = lower[k];
    p.add({std::move(up), Relation::leq});
    p.add({std::move(lo), Relation::leq});
  }
  return p;
}

void Polyhedron::add(HalfSpace h) {
  if (h.func.dim() != dim_) {
    throw StructuralError("constraint of dimension " + std::to_string(h.func.dim()) + " added to polyhedron of dimension " +
                          std::to_string(dim_));
  }
  constraints_.push_back(std::move(h));
}

Polyhedron Polyhedron::with(HalfSpace h) const {
  Polyhedron p = *this;
  p.add(std::move(h));
  return p;
}

Polyhedron Polyhedron::intersect(const Polyhedron& other) const {
  if (other.dim_ != dim_) throw StructuralError("polyhedron dimension mismatch");
  Polyhedron p = *this;
  p.constraints_.insert(p.constraints_.end(), other.constraints_.begin(), other.constraints_.end());
  return p;
}

bool Polyhedron::contains(std::span<const double> x) const {
  if (x.size() != dim_) throw StructuralError("membership test at a point of the wrong dimension");
  return std::all_of(constraints_.begin(), constraints_.end(), [&](const HalfSpace& h) { return h.contains(x); });
}

std::string to_string(LpOutcome::Status s) {
  switch (s) {
    case LpOutcome::Status::infeasible: return "infeasible";
    case LpOutcome::Status::feasible: return "feasible";
    case LpOutcome::Status::optimal: return "optimal";
    case LpOutcome::Status::unbounded: return "unbounded";
  }
  return "?";
}

bool satisfies_within(const Polyhedron& p, std::span<const double> x, double tol) {
  for (const auto& h : p.constraints()) {
    const double v = h.func(x);
    if (h.relation == Relation::gt) {
      if (!(v > 0.0)) return false;
    } else {
      double scale = std::abs(h.func.bias);
      for (std::size_t j = 0; j < x.size(); ++j) scale += std::abs(h.func.weights[j] * x[j]);
      if (v > tol * std::max(1.0, scale)) return false;
    }
  }
  return true;
}

namespace detail {
namespace {

constexpr double kPivotTol = 1e-10;
constexpr double kFeasTol = 1e-10;
constexpr double kDualTol = 1e-9;

// Dense LU with partial pivoting for the n x n basis matrix. n is the number
// of LP variables, which stays tiny here, so the basis is refactored from
// scratch every iteration instead of being updated.
class BasisFactor {
 public:
  explicit BasisFactor(std::size_t n) : n_(n), lu_(n * n), perm_(n) {}

  bool factor(const std::vector<const double*>& rows) {
    for (std::size_t r = 0; r < n_; ++r) std::copy(rows[r], rows[r] + n_, lu_.begin() + r * n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t k = 0; k < n_; ++k) {
      std::size_t piv = k;
      for (std::size_t r = k + 1; r < n_; ++r)
        if (std::abs(at(r, k)) > std::abs(at(piv, k))) piv = r;
      if (std::abs(at(piv, k)) < 1e-14) return false;
      if (piv != k) {
        for (std::size_t c = 0; c < n_; ++c) std::swap(at(k, c), at(piv, c));
        std::swap(perm_[k], perm_[piv]);
      }
      for (std::size_t r = k + 1; r < n_; ++r) {
        const double f = at(r, k) / at(k, k);
        at(r, k) = f;
        for (std::size_t c = k + 1; c < n_; ++c) at(r, c) -= f * at(k, c);
      }
    }
    return true;
  }

  // Solves B x = rhs where row r of B is basis row r.
  std::vector<double> solve(std::span<const double> rhs) const {
    std::vector<double> z(n_);
    for (std::size_t r = 0; r < n_; ++r) {
      double s = rhs[perm_[r]];
      for (std::size_t c = 0; c < r; ++c) s -= at(r, c) * z[c];
      z[r] = s;
    }
    for (std::size_t r = n_; r-- > 0;) {
      double s = z[r];
      for (std::size_t c = r + 1; c < n_; ++c) s -= at(r, c) * z[c];
      z[r] = s / at(r, r);
    }
    return z;
  }

  // Solves B^T y = rhs.
  std::vector<double> solve_transposed(std::span<const double> rhs) const {
    std::vector<double> w(n_);
    for (std::size_t r = 0; r < n_; ++r) {
      double s = rhs[r];
      for (std::size_t c = 0; c < r; ++c) s -= at(c, r) * w[c];
      w[r] = s / at(r, r);
    }
    for (std::size_t r = n_; r-- > 0;) {
      double s = w[r];
      for (std::size_t c = r + 1; c < n_; ++c) s -= at(c, r) * w[c];
      w[r] = s;
    }
    std::vector<double> y(n_);
    for (std::size_t r = 0; r < n_; ++r) y[perm_[r]] = w[r];
    return y;
  }

 private:
  double& at(std::size_t r, std::size_t c) { return lu_[r * n_ + c]; }
  double at(std::size_t r, std::size_t c) const { return lu_[r * n_ + c]; }

  std::size_t n_;
  std::vector<double> lu_;
  std::vector<std::size_t> perm_;
};

}  // namespace

// Primal simplex with Bland's rule applied to the dual
//   min b^T y  s.t.  A^T y = c, y >= 0,
// where A is augmented with the ambient cube rows so that it has full column
// rank and a dual-feasible starting basis exists for every c. A basis is a
// set of n rows of A; the associated primal point solves A_B x = b_B, and a
// nonbasic row enters when the primal point violates it.
LpSolution solve(std::span<const LpRow> rows, std::span<const double> c) {
  const std::size_t n = c.size();
  const std::size_t m = rows.size();
  const std::size_t total = m + 2 * n;

  std::vector<double> box_rows(2 * n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    box_rows[(2 * k) * n + k] = 1.0;
    box_rows[(2 * k + 1) * n + k] = -1.0;
  }
  auto row_a = [&](std::size_t j) -> const double* { return j < m ? rows[j].a.data() : &box_rows[(j - m) * n]; };
  auto row_b = [&](std::size_t j) -> double { return j < m ? rows[j].b : kAmbientBound; };

  std::vector<std::size_t> basis(n);
  for (std::size_t k = 0; k < n; ++k) basis[k] = m + 2 * k + (c[k] >= 0.0 ? 0 : 1);
  std::vector<char> in_basis(total, 0);
  for (auto j : basis) in_basis[j] = 1;

  BasisFactor lu(n);
  std::vector<const double*> brows(n);
  std::vector<double> bb(n);
  const std::size_t cap = 200 * (total + 10);

  LpSolution sol;
  for (std::size_t iter = 0;; ++iter) {
    if (iter > cap) throw InternalError("simplex exceeded its iteration cap");
    sol.iterations = iter;
    for (std::size_t k = 0; k < n; ++k) {
      brows[k] = row_a(basis[k]);
      bb[k] = row_b(basis[k]);
    }
    if (!lu.factor(brows)) throw InternalError("singular simplex basis");
    std::vector<double> x = lu.solve(bb);
    std::vector<double> y = lu.solve_transposed(c);

    double xnorm = 1.0;
    for (double v : x) xnorm = std::max(xnorm, std::abs(v));
    const double tol = kFeasTol * xnorm;

    // Bland: lowest-index violated row enters.
    std::size_t entering = total;
    for (std::size_t j = 0; j < total && entering == total; ++j) {
      if (in_basis[j]) continue;
      const double* a = row_a(j);
      double s = row_b(j);
      for (std::size_t k = 0; k < n; ++k) s -= a[k] * x[k];
      if (s < -tol) entering = j;
    }

    if (entering == total) {
      sol.x = std::move(x);
      sol.value = 0.0;
      for (std::size_t k = 0; k < n; ++k) sol.value += c[k] * sol.x[k];
      sol.status = LpSolution::Status::optimal;
      for (std::size_t k = 0; k < n; ++k)
        if (basis[k] >= m && y[k] > kDualTol) sol.status = LpSolution::Status::unbounded;
      return sol;
    }

    const std::vector<double> d = lu.solve_transposed(std::span<const double>(row_a(entering), n));
    // Pivot threshold relative to the column so that roundoff in an
    // ill-conditioned basis cannot pass for a genuine pivot.
    double dmax = 0.0;
    for (double v : d) dmax = std::max(dmax, std::abs(v));
    const double pivot_tol = kPivotTol * std::max(1.0, dmax);
    std::size_t leave = n;
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (d[k] <= pivot_tol) continue;
      const double ratio = std::max(0.0, y[k]) / d[k];
      const double tie = 1e-12 * std::max(1.0, best);
      if (leave == n || ratio < best - tie) {
        best = ratio;
        leave = k;
      } else if (ratio <= best + tie && basis[k] < basis[leave]) {
        best = std::min(best, ratio);
        leave = k;
      }
    }
    if (leave == n) {
      sol.status = LpSolution::Status::infeasible;
      return sol;
    }
    in_basis[basis[leave]] = 0;
    basis[leave] = entering;
    in_basis[entering] = 1;
  }
}

}  // namespace detail

namespace {

struct Normalized {
  detail::LpRow row;
  bool strict = false;
};

// Splits constraints into constant ones (decided immediately) and unit-norm
// LP rows. Returns false when a constant constraint is violated.
bool normalize(const Polyhedron& p, bool relax_strict, std::vector<Normalized>& out) {
  for (const auto& h : p.constraints()) {
    const bool strict = h.relation == Relation::gt;
    if (h.func.is_constant()) {
      const double b = h.func.bias;
      const bool ok = strict ? (relax_strict ? b >= 0.0 : b > 0.0) : b <= 0.0;
      if (!ok) return false;
      continue;
    }
    double norm = 0.0;
    for (double w : h.func.weights) norm = std::hypot(norm, w);
    Normalized nr;
    nr.strict = strict;
    nr.row.a.resize(h.func.dim());
    // leq:  w.x + b <= 0   ->   w.x <= -b
    // gt:   w.x + b >= t   ->  -w.x + t <= b   (t added by the caller)
    const double sign = strict ? -1.0 : 1.0;
    for (std::size_t k = 0; k < h.func.dim(); ++k) nr.row.a[k] = sign * h.func.weights[k] / norm;
    nr.row.b = -sign * h.func.bias / norm;
    out.push_back(std::move(nr));
  }
  return true;
}

}  // namespace

Feasibility check_feasibility(const Polyhedron& p, double eps) {
  if (!(eps > 0.0)) throw StructuralError("feasibility tolerance must be positive");
  const std::size_t n = p.dim();
  Feasibility result;
  std::vector<Normalized> norm;
  if (!normalize(p, false, norm)) return result;

  const bool any_strict = std::any_of(norm.begin(), norm.end(), [](const Normalized& r) { return r.strict; });
  std::vector<detail::LpRow> rows;
  rows.reserve(norm.size() + 1);
  std::vector<double> c;
  if (!any_strict) {
    for (auto& r : norm) rows.push_back(std::move(r.row));
    c.assign(n, 0.0);
  } else {
    for (auto& r : norm) {
      r.row.a.push_back(r.strict ? 1.0 : 0.0);
      rows.push_back(std::move(r.row));
    }
    detail::LpRow cap;
    cap.a.assign(n + 1, 0.0);
    cap.a[n] = 1.0;
    cap.b = 1.0;
    rows.push_back(std::move(cap));
    c.assign(n + 1, 0.0);
    c[n] = 1.0;
  }

  const detail::LpSolution s = detail::solve(rows, c);
  if (s.status == detail::LpSolution::Status::infeasible) return result;
  result.witness.assign(s.x.begin(), s.x.begin() + static_cast<std::ptrdiff_t>(n));
  if (!any_strict) {
    result.feasible = true;
    result.margin = std::numeric_limits<double>::infinity();
  } else {
    result.margin = s.x[n];
    result.feasible = result.margin > eps;
  }
  if (result.feasible && !satisfies_within(p, result.witness)) {
    throw InternalError("LP witness fails direct substitution");
  }
  if (!result.feasible) result.witness.clear();
  return result;
}

LpOutcome maximize(const AffineFunc& obj, const Polyhedron& p) {
  if (obj.dim() != p.dim()) throw StructuralError("objective and polyhedron differ in dimension");
  LpOutcome out;
  std::vector<Normalized> norm;
  if (!normalize(p, true, norm)) return out;
  std::vector<detail::LpRow> rows;
  rows.reserve(norm.size());
  for (auto& r : norm) rows.push_back(std::move(r.row));
  const detail::LpSolution s = detail::solve(rows, obj.weights);
  switch (s.status) {
    case detail::LpSolution::Status::infeasible: out.status = LpOutcome::Status::infeasible; break;
    case detail::LpSolution::Status::unbounded: out.status = LpOutcome::Status::unbounded; break;
    case detail::LpSolution::Status::optimal:
      out.status = LpOutcome::Status::optimal;
      out.witness = s.x;
      out.value = obj(s.x);
      break;
  }
  return out;
}

}  // namespace nn2sdt
