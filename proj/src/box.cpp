#include "nn2sdt/box.hpp"

#include <algorithm>
#include <cmath>

#include "nn2sdt/errors.hpp"

namespace nn2sdt {

Box::Box(std::vector<double> lo, std::vector<double> hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw StructuralError("box bounds differ in dimension");
  for (std::size_t k = 0; k < lower.size(); ++k)
    if (!(lower[k] <= upper[k])) throw StructuralError("box lower bound exceeds upper bound");
}

Box Box::point(std::span<const double> x) { return Box({x.begin(), x.end()}, {x.begin(), x.end()}); }

Box Box::cube(std::size_t n, double r) { return Box(std::vector<double>(n, -r), std::vector<double>(n, r)); }

bool Box::contains(std::span<const double> x, double slack) const {
  if (x.size() != dim()) throw StructuralError("box membership at a point of the wrong dimension");
  for (std::size_t k = 0; k < dim(); ++k)
    if (!(x[k] >= lower[k] - slack && x[k] <= upper[k] + slack)) return false;
  return true;
}

bool Box::contains(const Box& other) const {
  if (other.dim() != dim()) throw StructuralError("box dimension mismatch");
  for (std::size_t k = 0; k < dim(); ++k)
    if (other.lower[k] < lower[k] || other.upper[k] > upper[k]) return false;
  return true;
}

Polyhedron Box::polyhedron() const { return Polyhedron::box(lower, upper); }

Box hull(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw StructuralError("box dimension mismatch");
  Box h = a;
  for (std::size_t k = 0; k < a.dim(); ++k) {
    h.lower[k] = std::min(a.lower[k], b.lower[k]);
    h.upper[k] = std::max(a.upper[k], b.upper[k]);
  }
  return h;
}

}  // namespace nn2sdt
