#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nrt/params.hpp"

namespace nrt {

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool passed = false;
  bool aborted = false;
  std::string message;
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;  // entries above tolerance
  std::size_t checked = 0;
};

// Relative error with a floored denominator: central differences carry
// ~1e-10 of absolute noise, so comparing near-zero gradients against a bare
// ratio would flag healthy code.
inline double gradcheck_rel_error(double analytic, double numeric, double floor = 1e-3) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

// Central finite differences over every entry of every slot. `loss` must
// recompute the scalar objective from the slots' current values; the
// analytic gradients are expected to be sitting in slot.grad already.
inline GradCheckReport gradient_check(const std::function<double()>& loss,
                                      std::span<ParamSlot* const> params, double tol,
                                      double step = 1e-5) {
  GradCheckReport report;
  const double base = loss();
  if (!std::isfinite(base)) {
    report.aborted = true;
    report.message = "loss is not finite at the evaluation point";
    return report;
  }
  for (ParamSlot* slot : params) {
    slot->check_shapes();
    for (std::size_t i = 0; i < slot->value.size(); ++i) {
      const double saved = slot->value.data[i];
      slot->value.data[i] = saved + step;
      const double up = loss();
      slot->value.data[i] = saved - step;
      const double down = loss();
      slot->value.data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.aborted = true;
        report.message = "loss is not finite while perturbing " + slot->name;
        return report;
      }
      GradCheckEntry entry;
      entry.param = slot->name;
      entry.index = i;
      entry.analytic = slot->grad.data[i];
      entry.numeric = (up - down) / (2.0 * step);
      entry.rel_error = gradcheck_rel_error(entry.analytic, entry.numeric);
      ++report.checked;
      if (entry.rel_error > report.max_rel_error) {
        report.max_rel_error = entry.rel_error;
        report.worst = entry;
      }
      if (entry.rel_error >= tol) report.failures.push_back(entry);
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace nrt
