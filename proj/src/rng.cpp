#include "fedaugmix/rng.hpp"

#include <algorithm>
#include <numeric>

#include "fedaugmix/errors.hpp"

namespace fam {

std::vector<double> sample_dirichlet(double alpha, std::size_t n, Rng& rng) {
  if (!(alpha > 0.0) || n == 0) throw ConfigError("dirichlet: alpha must be positive and n >= 1");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> w(n);
  // Very small alpha can underflow every gamma draw to zero; redraw.
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (auto& v : w) v = gamma(rng);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (total > 0.0) {
      for (auto& v : w) v /= total;
      return w;
    }
  }
  std::fill(w.begin(), w.end(), 0.0);
  w[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
  return w;
}

double sample_beta(double a, double b, Rng& rng) {
  if (!(a > 0.0 && b > 0.0)) throw ConfigError("beta: parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double x = ga(rng), y = gb(rng);
    if (x + y > 0.0) return x / (x + y);
  }
  return 0.5;
}

}  // namespace fam
