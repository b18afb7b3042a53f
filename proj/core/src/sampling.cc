#include "walkergeo/sampling.h"

#include <random>
#include <stdexcept>

namespace walkergeo {
namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(int base, std::uint64_t i) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

}  // namespace

bool Box::contains(const std::vector<double>& x, double slack) const {
  for (int i = 0; i < dimension(); ++i)
    if (x[i] < bounds[i].first - slack || x[i] > bounds[i].second + slack) return false;
  return true;
}

Box Box::shrunk(double factor) const {
  Box b = *this;
  for (auto& [lo, hi] : b.bounds) {
    const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo) * factor;
    lo = c - r;
    hi = c + r;
  }
  return b;
}

std::vector<std::vector<double>> sample_points(const Box& box, int count, std::uint64_t seed) {
  const int d = box.dimension();
  if (d > static_cast<int>(std::size(kPrimes))) throw std::invalid_argument("box dimension too large");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> shift(d);
  for (double& s : shift) s = unit(rng);
  std::vector<std::vector<double>> pts(count, std::vector<double>(d));
  for (int k = 0; k < count; ++k) {
    for (int i = 0; i < d; ++i) {
      double t = radical_inverse(kPrimes[i], static_cast<std::uint64_t>(k) + 1) + shift[i];
      if (t >= 1.0) t -= 1.0;
      const auto [lo, hi] = box.bounds[i];
      pts[k][i] = lo + t * (hi - lo);
    }
  }
  return pts;
}

}  // namespace walkergeo
