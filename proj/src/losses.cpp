#include "lightbsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lightbsr/kernels.hpp"

namespace lightbsr {

void NegativeQueue::enqueue(const std::vector<double>& vec) {
  if (vec.size() != static_cast<std::size_t>(dim_))
    throw std::invalid_argument("queue entry dim mismatch");
  double nrm = std::sqrt(kernels::dot(vec.data(), vec.data(), vec.size()));
  if (nrm <= 0.0) throw std::invalid_argument("cannot enqueue a zero vector");
  std::vector<double> unit(vec.size());
  for (std::size_t i = 0; i < vec.size(); ++i) unit[i] = vec[i] / nrm;
  entries_.push_back(std::move(unit));
  while (entries_.size() > capacity_) entries_.pop_front();
}

void NegativeQueue::enqueue_rows(const Tensor& rows) {
  if (rows.ndim() != 2 || rows.dim(1) != dim_)
    throw std::invalid_argument("queue rows dim mismatch");
  std::vector<double> row(static_cast<std::size_t>(dim_));
  for (std::int64_t i = 0; i < rows.dim(0); ++i) {
    std::copy_n(rows.ptr() + i * dim_, dim_, row.begin());
    enqueue(row);
  }
}

Tensor NegativeQueue::snapshot() const {
  Tensor out({static_cast<std::int64_t>(entries_.size()), dim_});
  std::size_t r = 0;
  for (const auto& e : entries_) {
    std::copy(e.begin(), e.end(), out.ptr() + r * static_cast<std::size_t>(dim_));
    ++r;
  }
  return out;
}

ad::Var contrastive_loss(const std::vector<ad::Var>& p, const Tensor& m,
                         const NegativeQueue& q, double tau) {
  const int d = static_cast<int>(p.size());
  if (d < 2) throw std::invalid_argument("contrastive loss needs D >= 2 positives");
  if (q.empty()) throw std::invalid_argument("contrastive loss needs a non-empty queue");
  if (m.ndim() != 3 || m.dim(1) != d)
    throw std::invalid_argument("momentum tensor must be [B, D, dim]");
  const std::int64_t b = m.dim(0), dim = m.dim(2);
  for (const auto& pi : p)
    if (pi.value().ndim() != 2 || pi.value().dim(0) != b || pi.value().dim(1) != dim)
      throw std::invalid_argument("principal projections must be [B, dim]");

  const ad::Var queue_rows = ad::constant(q.snapshot());
  ad::Var total;
  for (int i = 0; i < d; ++i) {
    // negatives are shared across all j for this i
    ad::Var negs = ad::scale(ad::matmul_nt(p[static_cast<std::size_t>(i)], queue_rows),
                             1.0 / tau);
    for (int j = 0; j < d; ++j) {
      if (j == i) continue;
      Tensor mj({b, dim});
      for (std::int64_t k = 0; k < b; ++k)
        std::copy_n(m.ptr() + (k * d + j) * dim, dim, mj.ptr() + k * dim);
      ad::Var pos = ad::scale(
          ad::rowwise_dot(p[static_cast<std::size_t>(i)], ad::constant(mj)), 1.0 / tau);
      ad::Var pos_col = ad::reshape(pos, {b, 1});
      ad::Var lse = ad::logsumexp_rows(ad::concat_cols(pos_col, negs));
      ad::Var sim = ad::mean_all(ad::sub(lse, pos));
      total = total.defined() ? ad::add(total, sim) : sim;
    }
  }
  return ad::scale(total, 1.0 / (static_cast<double>(d) * (d - 1)));
}

double contrastive_loss_value(const Tensor& p, const Tensor& m,
                              const NegativeQueue& q, double tau) {
  if (p.ndim() != 3 || !p.same_shape(const_cast<Tensor&>(m)))
    throw std::invalid_argument("P and M must both be [B, D, dim]");
  const std::int64_t b = p.dim(0), d = p.dim(1), dim = p.dim(2);
  std::vector<ad::Var> rows;
  for (std::int64_t i = 0; i < d; ++i) {
    Tensor pi({b, dim});
    for (std::int64_t k = 0; k < b; ++k)
      std::copy_n(p.ptr() + (k * d + i) * dim, dim, pi.ptr() + k * dim);
    rows.push_back(ad::constant(std::move(pi)));
  }
  return contrastive_loss(rows, m, q, tau).value().data[0];
}

void momentum_update(std::vector<Param*>& theta_m,
                     const std::vector<Param*>& theta_p, double alpha) {
  if (theta_m.size() != theta_p.size())
    throw std::invalid_argument("parameter set size mismatch");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
  for (std::size_t i = 0; i < theta_m.size(); ++i) {
    Tensor& m = theta_m[i]->value;
    const Tensor& pv = theta_p[i]->value;
    if (!m.same_shape(pv)) throw std::invalid_argument("parameter shape mismatch");
    for (std::size_t j = 0; j < m.data.size(); ++j)
      m.data[j] = alpha * m.data[j] + (1.0 - alpha) * pv.data[j];
  }
}

ad::Var sr_loss(const ad::Var& sr, const ad::Var& hr) {
  if (!sr.value().same_shape(hr.value()))
    throw std::invalid_argument("sr_loss: dimension mismatch");
  return ad::mean_all(ad::abs(ad::sub(sr, hr)));
}

double sr_loss_value(const Tensor& sr, const Tensor& hr) {
  return sr_loss(ad::constant(sr), ad::constant(hr)).value().data[0];
}

DistillLosses distill_losses(const IDRPairTensors& teacher, const IDRPair& student,
                             double beta) {
  if (!student.spatial.value().same_shape(const_cast<Tensor&>(teacher.spatial)) ||
      !student.channel.value().same_shape(const_cast<Tensor&>(teacher.channel)))
    throw std::invalid_argument("distill_losses: IDR shape mismatch");

  DistillLosses out;
  const ad::Var t_sp = ad::constant(teacher.spatial);
  out.l2 = ad::mean_all(ad::square(ad::sub(student.spatial, t_sp)));

  // Channel IDRs as [rows, C]; softmax over C. Teacher is a constant, so its
  // log-softmax is computed eagerly.
  const Tensor& tc = teacher.channel;
  const std::int64_t rows = tc.ndim() == 2 ? tc.dim(0) : 1;
  const std::int64_t c = tc.ndim() == 2 ? tc.dim(1) : tc.numel();
  Tensor t_prob({rows, c});
  Tensor t_logp({rows, c});
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = tc.ptr() + r * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::int64_t j = 0; j < c; ++j) {
      t_logp.ptr()[r * c + j] = row[j] - lse;
      t_prob.ptr()[r * c + j] = std::exp(row[j] - lse);
    }
  }
  ad::Var s_ch = student.channel;
  if (s_ch.value().ndim() == 1) s_ch = ad::reshape(s_ch, {1, c});
  ad::Var s_logp = ad::log_softmax_rows(s_ch);
  // KL per row, averaged over rows
  ad::Var kl_terms = ad::mul(ad::constant(t_prob),
                             ad::sub(ad::constant(t_logp), s_logp));
  out.lkl = ad::scale(ad::sum_all(kl_terms), 1.0 / static_cast<double>(rows));

  out.l1 = ad::mean_all(ad::abs(ad::sub(s_ch, ad::constant([&] {
    Tensor t = tc;
    t.shape = {rows, c};
    return t;
  }()))));

  out.total = ad::add(ad::add(out.l2, out.lkl), ad::scale(out.l1, beta));
  return out;
}

}  // namespace lightbsr
