#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fam {

using Rng = std::mt19937_64;

// Independent stream for a (seed, tag...) tuple, e.g. (seed, round, client).
inline Rng make_rng(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  for (auto k : key) {
    words.push_back(static_cast<std::uint32_t>(k & 0xFFFFFFFFu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Dirichlet(alpha, ..., alpha) over n categories.
std::vector<double> sample_dirichlet(double alpha, std::size_t n, Rng& rng);
double sample_beta(double a, double b, Rng& rng);

}  // namespace fam
