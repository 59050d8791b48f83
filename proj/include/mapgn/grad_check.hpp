#ifndef MAPGN_GRAD_CHECK_HPP
#define MAPGN_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include "mapgn/tensor.hpp"

namespace mapgn {

// Relative discrepancy used by every gradient check:
// |analytic - numeric| / max(1, |analytic|); NaN maps to +inf.
inline double gradient_discrepancy(double analytic, double numeric) {
  const double e = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  return std::isnan(e) ? std::numeric_limits<double>::infinity() : e;
}

// Compares reverse-mode gradients of scalar `f` at `point` against central
// differences with step `eps`. Returns the largest relative discrepancy.
inline double grad_check(const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>& f,
                         const Matrix<double>& point, double eps) {
  Matrix<double> analytic;
  {
    Tape<double> tape;
    auto x = tape.variable(point);
    auto y = f(tape, x);
    tape.backward(y);
    analytic = tape.grad_of(x.id());
  }
  auto eval = [&](const Matrix<double>& p) {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    auto x = tape.constant(p);
    return f(tape, x).item();
  };
  double worst = 0.0;
  Matrix<double> probe = point;
  for (Eigen::Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = eval(probe);
    probe.data()[i] = orig - eps;
    const double down = eval(probe);
    probe.data()[i] = orig;
    worst = std::max(worst, gradient_discrepancy(analytic.data()[i], (up - down) / (2 * eps)));
  }
  return worst;
}

// Per-parameter variant for losses built from a named parameter map. `loss`
// builds the scalar on a fresh tape each call, binding parameters itself.
struct ParamCheckReport {
  double max_error = 0.0;
  std::string worst_param;
  std::map<std::string, double> per_param;
};

template <typename ParamMap>
ParamCheckReport grad_check_params(ParamMap& params,
                                   const std::function<Tensor<double>(Tape<double>&)>& loss,
                                   double eps) {
  for (auto& [name, p] : params) p.zero_grad();
  {
    Tape<double> tape;
    auto y = loss(tape);
    tape.backward(y);
  }
  std::map<std::string, Matrix<double>> analytic;
  for (auto& [name, p] : params) analytic[name] = p.grad;

  auto eval = [&]() {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    return loss(tape).item();
  };
  ParamCheckReport report;
  for (auto& [name, p] : params) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.data()[i];
      p.value.data()[i] = orig + eps;
      const double up = eval();
      p.value.data()[i] = orig - eps;
      const double down = eval();
      p.value.data()[i] = orig;
      worst = std::max(worst, gradient_discrepancy(analytic[name].data()[i], (up - down) / (2 * eps)));
    }
    report.per_param[name] = worst;
    if (worst >= report.max_error) {
      report.max_error = worst;
      report.worst_param = name;
    }
  }
  return report;
}

}  // namespace mapgn

#endif  // MAPGN_GRAD_CHECK_HPP
