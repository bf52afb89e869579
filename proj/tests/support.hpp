#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "algotriage/cohort.hpp"
#include "algotriage/dataset.hpp"
#include "algotriage/inference.hpp"
#include "algotriage/random.hpp"

namespace testing_support {

using namespace algotriage;

/// Generated cohort with indices and randomization controls attached.
inline Frame analysis_frame(const cohort::CohortGenerator& gen, std::uint64_t seed) {
  Frame f = dataset::to_frame(gen.generate(seed));
  dataset::add_indices(f, {});
  inference::add_randomization_controls(f);
  return f;
}

/// Cohort config for the reallocation scenario: very noisy control-arm
/// assessments that the tool mostly removes.
inline cohort::CohortConfig reallocation_config() {
  cohort::CohortConfig c;
  c.worker_noise_var = 16.0;
  c.noise_reduction = 8.0;
  return c;
}

/// Small random frame with household clusters, a cluster-level treatment,
/// a few covariates and an outcome.
inline Frame random_frame(std::size_t n, std::size_t clusters, std::uint64_t seed) {
  Engine rng = make_engine(seed, 7);
  Frame f(n);
  std::vector<double> hh(n), t(n), x1(n), x2(n), x3(n), y(n), strat(n);
  std::vector<double> cluster_t(clusters), cluster_u(clusters);
  for (std::size_t g = 0; g < clusters; ++g) {
    cluster_t[g] = g < 2 ? static_cast<double>(g) : (bernoulli(rng, 0.5) ? 1.0 : 0.0);
    cluster_u[g] = std_normal(rng);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = i < clusters ? i : static_cast<std::size_t>(uniform01(rng) * static_cast<double>(clusters));
    hh[i] = static_cast<double>(g + 1);
    t[i] = cluster_t[g];
    x1[i] = std_normal(rng);
    x2[i] = bernoulli(rng, 0.3) ? 1.0 : 0.0;
    x3[i] = uniform01(rng) * 4.0;
    strat[i] = static_cast<double>(g % 3);
    y[i] = 0.3 * t[i] + 0.5 * x1[i] - 0.2 * x2[i] + cluster_u[g] + std_normal(rng);
  }
  f.set("household_id", hh);
  f.set("treated", t);
  f.set("x1", x1);
  f.set("x2", x2);
  f.set("x3", x3);
  f.set("stratum", strat);
  f.set("y", y);
  return f;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("algotriage_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
