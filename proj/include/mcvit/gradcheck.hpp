#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcvit/autodiff.hpp"

namespace mcvit {

struct NamedParam {
  std::string group;
  ad::Var var;
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so entries whose true
  // gradient is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  // Negative-control hook: added to every analytic gradient entry before
  // comparison. Zero in real use.
  double analytic_bias = 0.0;
};

struct GradcheckGroup {
  std::string group;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed = true;
};

double relative_error(double analytic, double numeric, double floor);

/// Compares reverse-mode gradients of `loss` against central differences,
/// entry by entry, for every parameter in `params`. `loss` must rebuild its
/// graph on each call from the current parameter values.
GradcheckReport gradcheck(const std::function<ad::Var()>& loss, std::span<const NamedParam> params,
                          const GradcheckOptions& options = {});

}  // namespace mcvit
