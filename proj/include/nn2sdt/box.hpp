#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nn2sdt/lp.hpp"

namespace nn2sdt {

/// Axis-aligned box [lower, upper] (closed).
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  Box() = default;
  Box(std::vector<double> lo, std::vector<double> hi);  // checks lo <= hi

  static Box point(std::span<const double> x);
  /// [-r, r]^n
  static Box cube(std::size_t n, double r);

  std::size_t dim() const noexcept { return lower.size(); }
  bool contains(std::span<const double> x, double slack = 0.0) const;
  bool contains(const Box& other) const;
  double width(std::size_t k) const { return upper[k] - lower[k]; }
  Polyhedron polyhedron() const;

  bool operator==(const Box&) const = default;
};

/// Smallest box containing both.
Box hull(const Box& a, const Box& b);

}  // namespace nn2sdt
