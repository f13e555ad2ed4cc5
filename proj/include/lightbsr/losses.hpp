#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "lightbsr/autodiff.hpp"
#include "lightbsr/model.hpp"
#include "lightbsr/tensor.hpp"

namespace lightbsr {

// FIFO of L2-normalized projection vectors used as InfoNCE negatives.
class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity, int dim)
      : capacity_(capacity), dim_(dim) {}

  // Vectors are normalized on entry; oldest entries are evicted beyond capacity.
  void enqueue(const std::vector<double>& vec);
  void enqueue_rows(const Tensor& rows);  // [n, dim]

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  int dim() const { return dim_; }
  bool empty() const { return entries_.empty(); }

  // Snapshot as an [n, dim] tensor (insertion order, oldest first).
  Tensor snapshot() const;

 private:
  std::size_t capacity_;
  int dim_;
  std::deque<std::vector<double>> entries_;
};

// InfoNCE-style contrastive loss over positive pairs (i, j), i != j, with all
// queue entries as shared negatives. P carries gradients; M and the queue are
// treated as constant keys. p[i] holds the principal projections of positive
// index i for the whole batch ([B, dim], L2-normalized); m is the momentum
// counterpart as a constant [B, D, dim] tensor.
ad::Var contrastive_loss(const std::vector<ad::Var>& p, const Tensor& m,
                         const NegativeQueue& q, double tau);

// Convenience wrapper for plain-tensor inputs (no gradient); p, m: [B, D, dim].
double contrastive_loss_value(const Tensor& p, const Tensor& m,
                              const NegativeQueue& q, double tau);

// theta_M <- alpha * theta_M + (1 - alpha) * theta_P, elementwise.
void momentum_update(std::vector<Param*>& theta_m,
                     const std::vector<Param*>& theta_p, double alpha);

// Mean absolute pixel difference.
ad::Var sr_loss(const ad::Var& sr, const ad::Var& hr);
double sr_loss_value(const Tensor& sr, const Tensor& hr);

struct DistillLosses {
  ad::Var l2;   // mean squared spatial-IDR difference
  ad::Var lkl;  // forward KL between softmax-normalized channel IDRs
  ad::Var l1;   // mean absolute channel-IDR difference
  ad::Var total;  // l2 + lkl + beta * l1
};

// Teacher IDRs are constants; gradients flow to the student only.
DistillLosses distill_losses(const IDRPairTensors& teacher, const IDRPair& student,
                             double beta);

}  // namespace lightbsr
