#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/tape.hpp"

namespace cogdiag {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass = false;
};

// Compares analytic gradients against central finite differences.
//
// `loss(true)` must run a full tape forward+backward over the current
// parameter values, leaving gradients in each Parameter::grad, and return
// the loss; `loss(false)` must return the loss only. The computation has to
// be deterministic for fixed parameter values (fix any dropout seed inside
// the closure).
GradCheckReport grad_check(const std::function<double(bool with_grad)>& loss,
                           std::span<Parameter* const> params, double tolerance,
                           double h = 1e-5);

}  // namespace cogdiag
