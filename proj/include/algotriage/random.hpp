#pragma once

#include <cstdint>
#include <random>

namespace algotriage {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(derive_seed(seed, stream)),
                    static_cast<std::uint32_t>(derive_seed(seed, stream) >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Engine(seq);
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Engine& rng, double p) { return uniform01(rng) < p; }

inline double std_normal(Engine& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

/// Gamma with the given mean and variance; variance 0 returns the mean.
inline double gamma_mean_var(Engine& rng, double mean, double variance) {
  if (variance <= 0.0) return mean;
  const double shape = mean * mean / variance;
  const double scale = variance / mean;
  std::gamma_distribution<double> dist(shape, scale);
  return dist(rng);
}

inline long poisson(Engine& rng, double rate) {
  if (rate <= 0.0) return 0;
  std::poisson_distribution<long> dist(rate);
  return dist(rng);
}

}  // namespace algotriage
