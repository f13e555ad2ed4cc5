#pragma once

#include <vector>

#include "lightbsr/autodiff.hpp"

namespace lightbsr {

// Adam with (0.9, 0.999) moments, no weight decay.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Param*> params, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(double lr);
  void zero_grad();
  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

// Cosine annealing from lr_start (epoch 0) to lr_end (epoch total-1).
double cosine_lr(double lr_start, double lr_end, int epoch, int total_epochs);

}  // namespace lightbsr
