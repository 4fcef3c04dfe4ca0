#include "dasa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dasa/errors.hpp"

namespace dasa {

namespace {

double checked_value(const std::function<Tensor()>& loss_fn) {
  NoGradGuard guard;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw NumericalError("finite_diff_check: non-finite loss");
  return v;
}

double entry_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

std::string parameter_group(const std::string& name) {
  const auto pos = name.rfind('.');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, ParamStore& params,
                                  double epsilon, const GradientTamper& tamper) {
  if (!(epsilon > 0.0)) throw ContractError("finite_diff_check: epsilon must be positive");
  params.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericalError("finite_diff_check: non-finite loss");
  loss.backward();
  if (tamper) tamper(params);

  GradCheckReport report;
  for (auto& [name, t] : params.entries()) {
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = checked_value(loss_fn);
      values[i] = saved - epsilon;
      const double down = checked_value(loss_fn);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, entry_error(analytic[i], numeric));
      ++report.entries_checked;
    }
    auto& group = report.group_worst[parameter_group(name)];
    group = std::max(group, worst);
    if (worst >= report.max_relative_error) {
      report.max_relative_error = worst;
      report.worst_parameter = name;
    }
  }
  params.zero_grad();
  return report;
}

double finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("finite_diff_check: epsilon must be positive");
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = checked_value(loss_fn);
      values[i] = saved - epsilon;
      const double down = checked_value(loss_fn);
      values[i] = saved;
      worst = std::max(worst, entry_error(analytic[i], (up - down) / (2.0 * epsilon)));
    }
    t.zero_grad();
  }
  return worst;
}

}  // namespace dasa
