#include "loopsoup/quadrature.hpp"

#include <cmath>
#include <queue>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "loopsoup/error.hpp"

namespace loopsoup {

namespace {

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

Panel evaluate(const std::function<double(double)>& f, double a, double b) {
  double err = 0.0;
  const double v =
      boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err);
  return {a, b, v, err};
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol, int max_intervals) {
  QuadratureResult out;
  if (!(b > a)) return out;
  std::priority_queue<Panel> panels;
  panels.push(evaluate(f, a, b));
  double error = panels.top().error;
  int intervals = 1;
  while (error > abs_tol) {
    if (intervals >= max_intervals) {
      std::ostringstream msg;
      msg << "adaptive quadrature on [" << a << ", " << b << "] stopped at error " << error
          << " > " << abs_tol;
      throw NumericError(msg.str());
    }
    Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    Panel left = evaluate(f, worst.a, mid);
    Panel right = evaluate(f, mid, worst.b);
    error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
    ++intervals;
    if (mid <= worst.a || mid >= worst.b) break;
  }
  double v = 0.0, e = 0.0;
  while (!panels.empty()) {
    v += panels.top().value;
    e += panels.top().error;
    panels.pop();
  }
  out.value = v;
  out.error = e;
  out.evaluations = 29 * (2 * intervals - 1);
  return out;
}

}  // namespace loopsoup
