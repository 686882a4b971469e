#include "cogdiag/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cogdiag {

GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           std::span<Parameter* const> params, double tolerance, double h) {
  loss(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  report.worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    double worst = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + h;
      const double up = loss(false);
      p.value.data[i] = saved - h;
      const double dn = loss(false);
      p.value.data[i] = saved;
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[pi].data[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    report.entries.push_back({p.name, worst});
    report.worst = std::max(report.worst, worst);
  }
  report.pass = report.worst <= tolerance;
  return report;
}

}  // namespace cogdiag
