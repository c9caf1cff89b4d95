#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace loopsoup {

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;

  /// |mean - exact| / stderr, with a zero stderr treated as exact agreement
  /// only when the difference vanishes too.
  double z_score(double exact) const;
};

Estimate summarize(const std::vector<double>& values);

/// mean(num) / mean(den) with the delta-method standard error; num[i] and
/// den[i] must come from the same sample.
Estimate ratio_estimate(const std::vector<double>& num, const std::vector<double>& den);

/// Evaluates sample(i) for i < count on the worker pool (slot i gets stream
/// i) and returns the values in index order.
std::vector<double> collect(std::size_t count, const std::function<double(std::size_t)>& sample);

}  // namespace loopsoup
