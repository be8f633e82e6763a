// Seeded RNG streams. Independent streams are derived from a root seed with
// fixed stream tags so that sampler, weight-noise, init and MC draws never
// perturb each other and results do not depend on worker count.

#pragma once

#include <cstdint>
#include <random>

#include "invbasin/tensor.hpp"

namespace invbasin {

// splitmix64 finalizer; decorrelates seed/tag pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream tags. Keep values stable: they are part of run reproducibility.
namespace stream {
constexpr std::uint64_t kInit = 1;       // parameter initialization
constexpr std::uint64_t kSampler = 2;    // batch / window sampling
constexpr std::uint64_t kEps = 3;        // variational weight noise
constexpr std::uint64_t kNoise = 4;      // training-data perturbation
constexpr std::uint64_t kMc = 5;         // Monte-Carlo evaluation draws
constexpr std::uint64_t kValSampler = 6; // fixed validation batches
constexpr std::uint64_t kPower = 7;      // power-iteration start vector
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Rng(std::uint64_t root_seed, std::uint64_t tag)
      : engine_(mix_seed(root_seed, tag)) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double std = 1.0) {
    return std::normal_distribution<double>(mean, std)(engine_);
  }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  Tensor normal_tensor(std::vector<std::size_t> shape, double mean = 0.0,
                       double std = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(mean, std);
    return t;
  }

  Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
    return t;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace invbasin
