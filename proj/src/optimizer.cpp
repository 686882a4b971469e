#include "cogdiag/optimizer.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"

namespace cogdiag {

void Adam::step(std::span<Parameter* const> params) {
  if (moments_.empty()) {
    moments_.reserve(params.size());
    for (const Parameter* p : params) {
      moments_.push_back({Matrix::zeros(p->value.rows, p->value.cols),
                          Matrix::zeros(p->value.rows, p->value.cols)});
    }
  }
  if (moments_.size() != params.size()) {
    throw ConfigError("Adam::step: parameter set changed size between steps");
  }

  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw DivergenceError("non-finite gradient in parameter '" + p->name + "'");
    }
    if (!p->grad.same_shape(p->value)) {
      throw DimensionError("Adam::step: gradient shape " + p->grad.shape_str() +
                           " does not match parameter '" + p->name + "' " + p->value.shape_str());
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    Moments& mo = moments_[pi];
    const int n = static_cast<int>(p.value.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const double g = p.grad.data[i];
      mo.m.data[i] = cfg_.beta1 * mo.m.data[i] + (1.0 - cfg_.beta1) * g;
      mo.v.data[i] = cfg_.beta2 * mo.v.data[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mo.m.data[i] / bc1;
      const double vhat = mo.v.data[i] / bc2;
      double x = p.value.data[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      if (p.nonneg && x < 0.0) x = 0.0;
      p.value.data[i] = x;
    }
  }
}

}  // namespace cogdiag
