#pragma once

#include <cstdint>
#include <random>

namespace loopsoup {

/// Pseudo-random stream addressed by (seed, stream id). Two streams with the
/// same address produce the same sequence regardless of which thread or in
/// which order they are consumed; this is what makes Monte Carlo results
/// independent of the parallel schedule.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  Rng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double exponential(double rate);
  double normal();
  std::uint64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
};

}  // namespace loopsoup
