#include "loopsoup/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "loopsoup/parallel.hpp"

namespace loopsoup {

double Estimate::z_score(double exact) const {
  const double diff = std::abs(mean - exact);
  if (stderr_ > 0.0) return diff / stderr_;
  return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

Estimate summarize(const std::vector<double>& values) {
  Estimate out;
  out.samples = values.size();
  if (values.empty()) return out;
  // Two-pass mean and variance.
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stderr_ = std::sqrt(ss / (values.size() - 1) / values.size());
  }
  return out;
}

Estimate ratio_estimate(const std::vector<double>& num, const std::vector<double>& den) {
  if (num.size() != den.size()) throw std::invalid_argument("ratio_estimate: size mismatch");
  Estimate out;
  out.samples = num.size();
  if (num.empty()) return out;
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    sn += num[i];
    sd += den[i];
  }
  out.mean = sn / sd;
  if (num.size() > 1) {
    const double dbar = sd / den.size();
    double ss = 0.0;
    for (std::size_t i = 0; i < num.size(); ++i) {
      const double r = num[i] - out.mean * den[i];
      ss += r * r;
    }
    out.stderr_ = std::sqrt(ss / (num.size() - 1) / num.size()) / std::abs(dbar);
  }
  return out;
}

std::vector<double> collect(std::size_t count, const std::function<double(std::size_t)>& sample) {
  std::vector<double> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = sample(i); });
  return out;
}

}  // namespace loopsoup
