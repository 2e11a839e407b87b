#include "mcvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mcvit {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const std::function<ad::Var()>& loss, std::span<const NamedParam> params,
                          const GradcheckOptions& options) {
  for (const auto& p : params) {
    auto v = p.var;
    v.zero_grad();
  }
  {
    ad::Var root = loss();
    ad::backward(root);
  }

  GradcheckReport report;
  for (const auto& p : params) {
    ad::Var v = p.var;
    const Matrix analytic = v.has_grad() ? v.grad() : Matrix::Zero(v.rows(), v.cols());
    auto group = std::find_if(report.groups.begin(), report.groups.end(),
                              [&](const GradcheckGroup& g) { return g.group == p.group; });
    if (group == report.groups.end()) {
      report.groups.push_back({p.group, 0, 0.0});
      group = std::prev(report.groups.end());
    }

    ad::NoGradGuard no_grad;
    Matrix& value = v.mutable_value();
    for (Index i = 0; i < value.size(); ++i) {
      const double original = value.data()[i];
      value.data()[i] = original + options.step;
      const double plus = loss().item();
      value.data()[i] = original - options.step;
      const double minus = loss().item();
      value.data()[i] = original;

      const double numeric = (plus - minus) / (2.0 * options.step);
      double err = relative_error(analytic.data()[i] + options.analytic_bias, numeric, options.floor);
      if (!std::isfinite(err)) err = INFINITY;
      group->entries += 1;
      group->max_rel_error = std::max(group->max_rel_error, err);
      report.max_rel_error = std::max(report.max_rel_error, err);
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace mcvit
