#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cogdiag/tape.hpp"

namespace cogdiag {

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Parameters flagged
// `nonneg` are clamped to >= 0 after every update, which keeps the
// interaction MLP weights non-negative and the response probability
// monotone in each proficiency component.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update over all parameters. Throws DivergenceError naming the
  // parameter if any gradient entry is non-finite; no parameter is touched
  // in that case.
  void step(std::span<Parameter* const> params);

  int steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };

  AdamConfig cfg_;
  std::vector<Moments> moments_;
  int t_ = 0;
};

}  // namespace cogdiag
