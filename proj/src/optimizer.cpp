#include "lightbsr/optimizer.hpp"

#include <cmath>

namespace lightbsr {

void AdamOptimizer::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params_) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double g = p->grad.data[i];
      double& m = p->adam_m.data[i];
      double& v = p->adam_v.data[i];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      p->value.data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps_);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

double cosine_lr(double lr_start, double lr_end, int epoch, int total_epochs) {
  if (total_epochs <= 1) return lr_end;
  const double t = static_cast<double>(epoch) / (total_epochs - 1);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(M_PI * t));
}

}  // namespace lightbsr
