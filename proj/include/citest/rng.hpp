#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

// All randomness in the library flows from a single master seed. Replicates,
// cells and methods get independent reproducible substreams by hashing the
// master seed together with a path of integers (splitmix64 finalizer chain),
// so a Monte Carlo run is a pure function of (parameters, seed) regardless of
// worker count or execution order.

namespace citest {

using Rng = std::mt19937_64;

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(master ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t v : path) h = mix64(h ^ mix64(v));
  return h;
}

inline Rng make_rng(std::uint64_t master,
                    std::initializer_list<std::uint64_t> path) {
  return Rng(substream_seed(master, path));
}

inline void fill_std_normal(Rng& rng, double* out, std::size_t n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) out[i] = gauss(rng);
}

}  // namespace citest
