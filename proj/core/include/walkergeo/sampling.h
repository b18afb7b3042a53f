#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace walkergeo {

// Axis-aligned box; one [min, max] pair per coordinate.
struct Box {
  std::vector<std::pair<double, double>> bounds;

  int dimension() const { return static_cast<int>(bounds.size()); }
  bool contains(const std::vector<double>& x, double slack = 0.0) const;
  // Same centre, each half-width scaled by `factor`.
  Box shrunk(double factor) const;
};

// Halton points (bases 2, 3, 5, ...) shifted modulo 1 by a rotation drawn from
// mt19937_64(seed), mapped into the box. Deterministic in (box, count, seed).
std::vector<std::vector<double>> sample_points(const Box& box, int count, std::uint64_t seed);

}  // namespace walkergeo
