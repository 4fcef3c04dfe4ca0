#pragma once

#include <functional>
#include <map>
#include <string>

#include "dasa/param_store.hpp"

namespace dasa {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  // Worst error per parameter group (name up to the last '.').
  std::map<std::string, double> group_worst;
  std::size_t entries_checked = 0;
};

// Optional hook applied to the analytic gradients before comparison; used to
// inject a corrupted gradient as a negative control.
using GradientTamper = std::function<void(ParamStore&)>;

// Compares analytic gradients of `loss_fn` against central differences for
// every entry of every parameter. Error per entry is
// |analytic - numeric| / max(1, |numeric|).
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, ParamStore& params,
                                  double epsilon = 1e-5,
                                  const GradientTamper& tamper = {});

// Same comparison for loose tensors that are not held in a ParamStore.
double finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                         double epsilon = 1e-5);

std::string parameter_group(const std::string& name);

}  // namespace dasa
