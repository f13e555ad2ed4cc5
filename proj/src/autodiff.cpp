#include "lightbsr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "lightbsr/kernels.hpp"

namespace lightbsr::ad {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(n);
}

Var leaf(Param& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->requires_grad = true;
  n->param = &p;
  n->backprop = [](Node& self) {
    kernels::axpy(1.0, self.grad.ptr(), self.param->grad.ptr(),
                  self.grad.data.size());
  };
  return Var(n);
}

void backward(const Var& root) {
  // Iterative post-order DFS for the topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (!root.node()->requires_grad)
    throw std::invalid_argument("backward on a graph with no trainable leaves");
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  auto& seed = root.node()->ensure_grad();
  std::fill(seed.data.begin(), seed.data.end(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <typename F, typename DF>
Var unary_op(const Var& x, F f, DF df, const char* /*name*/) {
  Tensor out(x.value().shape);
  const auto& xv = x.value().data;
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = f(xv[i]);
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [xn, df](Node& self) {
    auto& g = xn->ensure_grad();
    const auto& xv = xn->value.data;
    const auto& yv = self.value.data;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      g.data[i] += self.grad.data[i] * df(xv[i], yv[i]);
  }));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  kernels::axpy(1.0, b.value().ptr(), out.ptr(), out.data.size());
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad)
      kernels::axpy(1.0, self.grad.ptr(), an->ensure_grad().ptr(), self.grad.data.size());
    if (bn->requires_grad)
      kernels::axpy(1.0, self.grad.ptr(), bn->ensure_grad().ptr(), self.grad.data.size());
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  kernels::axpy(-1.0, b.value().ptr(), out.ptr(), out.data.size());
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad)
      kernels::axpy(1.0, self.grad.ptr(), an->ensure_grad().ptr(), self.grad.data.size());
    if (bn->requires_grad)
      kernels::axpy(-1.0, self.grad.ptr(), bn->ensure_grad().ptr(), self.grad.data.size());
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a.value().data[i] * b.value().data[i];
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.data.size(); ++i)
        g.data[i] += self.grad.data[i] * bn->value.data[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.data.size(); ++i)
        g.data[i] += self.grad.data[i] * an->value.data[i];
    }
  }));
}

Var scale(const Var& a, double s) {
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] * s;
  NodePtr an = a.node();
  return Var(make_node(std::move(out), {an}, [an, s](Node& self) {
    kernels::axpy(s, self.grad.ptr(), an->ensure_grad().ptr(), self.grad.data.size());
  }));
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v += s;
  NodePtr an = a.node();
  return Var(make_node(std::move(out), {an}, [an](Node& self) {
    kernels::axpy(1.0, self.grad.ptr(), an->ensure_grad().ptr(), self.grad.data.size());
  }));
}

Var gelu(const Var& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(
      x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [=](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) +
               v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      },
      "gelu");
}

Var leaky_relu(const Var& x, double slope) {
  return unary_op(
      x, [=](double v) { return v >= 0.0 ? v : slope * v; },
      [=](double v, double) { return v >= 0.0 ? 1.0 : slope; }, "leaky_relu");
}

Var sigmoid(const Var& x) {
  return unary_op(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var abs(const Var& x) {
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); },
      "abs");
}

Var square(const Var& x) {
  return unary_op(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; },
      "square");
}

// ---------------------------------------------------------------------------
// conv2d

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int groups) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw std::invalid_argument("conv2d: rank");
  const std::int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), ww = xv.dim(3);
  const std::int64_t co = wv.dim(0), cig = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  if (ci % groups != 0 || co % groups != 0 || cig != ci / groups)
    throw std::invalid_argument("conv2d: channel/group mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: even kernel");
  const int ph = static_cast<int>(kh) / 2, pw = static_cast<int>(kw) / 2;
  const std::int64_t ho = (h + 2 * ph - kh) / stride + 1;
  const std::int64_t wo = (ww + 2 * pw - kw) / stride + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: input too small");

  const std::int64_t cog = co / groups;
  const std::int64_t patch = cig * kh * kw;
  const std::int64_t cols = ho * wo;

  // Reflect-padding source index per column entry, per group (same for all n).
  auto reflect = [](std::int64_t i, std::int64_t nn) {
    if (i < 0) return -i;
    if (i >= nn) return 2 * nn - 2 - i;
    return i;
  };
  if (h < ph + 1 || ww < pw + 1)
    throw std::invalid_argument("conv2d: input smaller than reflect pad");

  // index map for one group's patch rows relative to channel base
  std::vector<std::int64_t> idx(static_cast<std::size_t>(patch * cols));
  for (std::int64_t c = 0; c < cig; ++c)
    for (std::int64_t ky = 0; ky < kh; ++ky)
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        const std::int64_t row = (c * kh + ky) * kw + kx;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = reflect(oy * stride + ky - ph, h);
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = reflect(ox * stride + kx - pw, ww);
            idx[static_cast<std::size_t>(row * cols + oy * wo + ox)] =
                (c * h + iy) * ww + ix;
          }
        }
      }

  Tensor out({n, co, ho, wo});
  std::vector<double> col(static_cast<std::size_t>(patch * cols));
  const std::int64_t x_stride = ci * h * ww;
  const std::int64_t y_stride = co * ho * wo;
  for (std::int64_t in = 0; in < n; ++in) {
    for (int g = 0; g < groups; ++g) {
      const double* xbase = xv.ptr() + in * x_stride + g * cig * h * ww;
      for (std::size_t i = 0; i < col.size(); ++i) col[i] = xbase[idx[i]];
      double* ybase = out.ptr() + in * y_stride + g * cog * ho * wo;
      kernels::gemm_nn(static_cast<std::size_t>(cog), static_cast<std::size_t>(cols),
                       static_cast<std::size_t>(patch), wv.ptr() + g * cog * patch,
                       col.data(), ybase);
    }
  }
  if (b.defined()) {
    const Tensor& bv = b.value();
    if (bv.numel() != co) throw std::invalid_argument("conv2d: bias size");
    for (std::int64_t in = 0; in < n; ++in)
      for (std::int64_t c = 0; c < co; ++c) {
        double* row = out.ptr() + (in * co + c) * cols;
        const double bval = bv.data[static_cast<std::size_t>(c)];
        for (std::int64_t i = 0; i < cols; ++i) row[i] += bval;
      }
  }

  NodePtr xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  std::vector<NodePtr> parents = {xn, wn};
  if (bn) parents.push_back(bn);
  auto idx_shared = std::make_shared<std::vector<std::int64_t>>(std::move(idx));
  return Var(make_node(
      std::move(out), std::move(parents),
      [=](Node& self) {
        const Tensor& dy = self.grad;
        std::vector<double> col(static_cast<std::size_t>(patch * cols));
        std::vector<double> dcol(static_cast<std::size_t>(patch * cols));
        const auto& map = *idx_shared;
        for (std::int64_t in = 0; in < n; ++in) {
          for (int g = 0; g < groups; ++g) {
            const double* dybase = dy.ptr() + in * y_stride + g * cog * ho * wo;
            if (wn->requires_grad) {
              const double* xbase = xn->value.ptr() + in * x_stride + g * cig * h * ww;
              for (std::size_t i = 0; i < col.size(); ++i) col[i] = xbase[map[i]];
              // dW[cog, patch] += dy[cog, cols] * col[patch, cols]^T
              kernels::gemm_nt(static_cast<std::size_t>(cog),
                               static_cast<std::size_t>(patch),
                               static_cast<std::size_t>(cols), dybase, col.data(),
                               wn->ensure_grad().ptr() + g * cog * patch);
            }
            if (xn->requires_grad) {
              std::fill(dcol.begin(), dcol.end(), 0.0);
              // dcol[patch, cols] += W[cog, patch]^T * dy[cog, cols]
              kernels::gemm_tn(static_cast<std::size_t>(cog),
                               static_cast<std::size_t>(cols),
                               static_cast<std::size_t>(patch),
                               wn->value.ptr() + g * cog * patch, dybase,
                               dcol.data());
              double* dxbase = xn->ensure_grad().ptr() + in * x_stride + g * cig * h * ww;
              for (std::size_t i = 0; i < dcol.size(); ++i) dxbase[map[i]] += dcol[i];
            }
          }
          if (bn && bn->requires_grad) {
            auto& db = bn->ensure_grad();
            for (std::int64_t c = 0; c < co; ++c) {
              const double* row = dy.ptr() + (in * co + c) * cols;
              double s = 0.0;
              for (std::int64_t i = 0; i < cols; ++i) s += row[i];
              db.data[static_cast<std::size_t>(c)] += s;
            }
          }
        }
      }));
}

// ---------------------------------------------------------------------------
// linear and row-matrix ops

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
    throw std::invalid_argument("linear: shape mismatch");
  const std::int64_t n = xv.dim(0), f = xv.dim(1), o = wv.dim(0);
  Tensor out({n, o});
  kernels::gemm_nt(static_cast<std::size_t>(n), static_cast<std::size_t>(o),
                   static_cast<std::size_t>(f), xv.ptr(), wv.ptr(), out.ptr());
  if (b.defined()) {
    const Tensor& bv = b.value();
    if (bv.numel() != o) throw std::invalid_argument("linear: bias size");
    for (std::int64_t i = 0; i < n; ++i)
      kernels::axpy(1.0, bv.ptr(), out.ptr() + i * o, static_cast<std::size_t>(o));
  }
  NodePtr xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  std::vector<NodePtr> parents = {xn, wn};
  if (bn) parents.push_back(bn);
  return Var(make_node(std::move(out), std::move(parents), [=](Node& self) {
    const Tensor& dy = self.grad;  // [n, o]
    if (xn->requires_grad)  // dx = dy * W
      kernels::gemm_nn(static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                       static_cast<std::size_t>(o), dy.ptr(), wn->value.ptr(),
                       xn->ensure_grad().ptr());
    if (wn->requires_grad)  // dW = dy^T * x
      kernels::gemm_tn(static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                       static_cast<std::size_t>(o), dy.ptr(), xn->value.ptr(),
                       wn->ensure_grad().ptr());
    if (bn && bn->requires_grad) {
      auto& db = bn->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        kernels::axpy(1.0, dy.ptr() + i * o, db.ptr(), static_cast<std::size_t>(o));
    }
  }));
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(1))
    throw std::invalid_argument("matmul_nt: shape mismatch");
  const std::int64_t n = av.dim(0), f = av.dim(1), m = bv.dim(0);
  Tensor out({n, m});
  kernels::gemm_nt(static_cast<std::size_t>(n), static_cast<std::size_t>(m),
                   static_cast<std::size_t>(f), av.ptr(), bv.ptr(), out.ptr());
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [=](Node& self) {
    const Tensor& dy = self.grad;  // [n, m]
    if (an->requires_grad)  // da = dy * b
      kernels::gemm_nn(static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                       static_cast<std::size_t>(m), dy.ptr(), bn->value.ptr(),
                       an->ensure_grad().ptr());
    if (bn->requires_grad)  // db = dy^T * a
      kernels::gemm_tn(static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                       static_cast<std::size_t>(m), dy.ptr(), an->value.ptr(),
                       bn->ensure_grad().ptr());
  }));
}

Var rowwise_dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "rowwise_dot");
  const std::int64_t n = a.value().dim(0), f = a.value().dim(1);
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i)
    out.data[static_cast<std::size_t>(i)] = kernels::dot(
        a.value().ptr() + i * f, b.value().ptr() + i * f, static_cast<std::size_t>(f));
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [=](Node& self) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double g = self.grad.data[static_cast<std::size_t>(i)];
      if (an->requires_grad)
        kernels::axpy(g, bn->value.ptr() + i * f, an->ensure_grad().ptr() + i * f,
                      static_cast<std::size_t>(f));
      if (bn->requires_grad)
        kernels::axpy(g, an->value.ptr() + i * f, bn->ensure_grad().ptr() + i * f,
                      static_cast<std::size_t>(f));
    }
  }));
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(0) != bv.dim(0))
    throw std::invalid_argument("concat_cols: shape mismatch");
  const std::int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({n, ca + cb});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(av.ptr() + i * ca, ca, out.ptr() + i * (ca + cb));
    std::copy_n(bv.ptr() + i * cb, cb, out.ptr() + i * (ca + cb) + ca);
  }
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [=](Node& self) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (an->requires_grad)
        kernels::axpy(1.0, self.grad.ptr() + i * (ca + cb),
                      an->ensure_grad().ptr() + i * ca, static_cast<std::size_t>(ca));
      if (bn->requires_grad)
        kernels::axpy(1.0, self.grad.ptr() + i * (ca + cb) + ca,
                      bn->ensure_grad().ptr() + i * cb, static_cast<std::size_t>(cb));
    }
  }));
}

Var l2_normalize_rows(const Var& x, double eps) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("l2_normalize_rows: rank");
  const std::int64_t n = xv.dim(0), f = xv.dim(1);
  Tensor out({n, f});
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = xv.ptr() + i * f;
    const double nrm = std::sqrt(kernels::dot(row, row, static_cast<std::size_t>(f)) + eps);
    norms[static_cast<std::size_t>(i)] = nrm;
    for (std::int64_t j = 0; j < f; ++j) out.ptr()[i * f + j] = row[j] / nrm;
  }
  NodePtr xn = x.node();
  auto norms_shared = std::make_shared<std::vector<double>>(std::move(norms));
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const double* y = self.value.ptr() + i * f;
      const double* dy = self.grad.ptr() + i * f;
      const double nrm = (*norms_shared)[static_cast<std::size_t>(i)];
      const double ydy = kernels::dot(y, dy, static_cast<std::size_t>(f));
      double* gx = g.ptr() + i * f;
      for (std::int64_t j = 0; j < f; ++j) gx[j] += (dy[j] - y[j] * ydy) / nrm;
    }
  }));
}

Var logsumexp_rows(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("logsumexp_rows: rank");
  const std::int64_t n = xv.dim(0), m = xv.dim(1);
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = xv.ptr() + i * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::int64_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
    out.data[static_cast<std::size_t>(i)] = mx + std::log(s);
  }
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const double lse = self.value.data[static_cast<std::size_t>(i)];
      const double gi = self.grad.data[static_cast<std::size_t>(i)];
      const double* row = xn->value.ptr() + i * m;
      double* gx = g.ptr() + i * m;
      for (std::int64_t j = 0; j < m; ++j) gx[j] += gi * std::exp(row[j] - lse);
    }
  }));
}

Var log_softmax_rows(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("log_softmax_rows: rank");
  const std::int64_t n = xv.dim(0), m = xv.dim(1);
  Tensor out({n, m});
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = xv.ptr() + i * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::int64_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::int64_t j = 0; j < m; ++j) out.ptr()[i * m + j] = row[j] - lse;
  }
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const double* y = self.value.ptr() + i * m;
      const double* dy = self.grad.ptr() + i * m;
      double gs = 0.0;
      for (std::int64_t j = 0; j < m; ++j) gs += dy[j];
      double* gx = g.ptr() + i * m;
      for (std::int64_t j = 0; j < m; ++j) gx[j] += dy[j] - std::exp(y[j]) * gs;
    }
  }));
}

// ---------------------------------------------------------------------------
// feature-map ops

Var scale_channels(const Var& x, const Var& g) {
  const Tensor& xv = x.value();
  const Tensor& gv = g.value();
  if (xv.ndim() != 4 || gv.ndim() != 2 || xv.dim(0) != gv.dim(0) ||
      xv.dim(1) != gv.dim(1))
    throw std::invalid_argument("scale_channels: shape mismatch");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const double s = gv.ptr()[i * c + j];
      const double* src = xv.ptr() + (i * c + j) * plane;
      double* dst = out.ptr() + (i * c + j) * plane;
      for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[p] * s;
    }
  NodePtr xn = x.node(), gn = g.node();
  return Var(make_node(std::move(out), {xn, gn}, [=](Node& self) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double* dy = self.grad.ptr() + (i * c + j) * plane;
        if (xn->requires_grad)
          kernels::axpy(gn->value.ptr()[i * c + j], dy,
                        xn->ensure_grad().ptr() + (i * c + j) * plane,
                        static_cast<std::size_t>(plane));
        if (gn->requires_grad)
          gn->ensure_grad().ptr()[i * c + j] += kernels::dot(
              dy, xn->value.ptr() + (i * c + j) * plane, static_cast<std::size_t>(plane));
      }
  }));
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) ||
      av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw std::invalid_argument("concat_channels: shape mismatch");
  const std::int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  const std::int64_t plane = av.dim(2) * av.dim(3);
  Tensor out({n, ca + cb, av.dim(2), av.dim(3)});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(av.ptr() + i * ca * plane, ca * plane,
                out.ptr() + i * (ca + cb) * plane);
    std::copy_n(bv.ptr() + i * cb * plane, cb * plane,
                out.ptr() + (i * (ca + cb) + ca) * plane);
  }
  NodePtr an = a.node(), bn = b.node();
  return Var(make_node(std::move(out), {an, bn}, [=](Node& self) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (an->requires_grad)
        kernels::axpy(1.0, self.grad.ptr() + i * (ca + cb) * plane,
                      an->ensure_grad().ptr() + i * ca * plane,
                      static_cast<std::size_t>(ca * plane));
      if (bn->requires_grad)
        kernels::axpy(1.0, self.grad.ptr() + (i * (ca + cb) + ca) * plane,
                      bn->ensure_grad().ptr() + i * cb * plane,
                      static_cast<std::size_t>(cb * plane));
    }
  }));
}

Var slice_channels(const Var& x, int c0, int c1) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4 || c0 < 0 || c1 <= c0 || c1 > xv.dim(1))
    throw std::invalid_argument("slice_channels: bad range");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  const std::int64_t cs = c1 - c0;
  Tensor out({n, cs, xv.dim(2), xv.dim(3)});
  for (std::int64_t i = 0; i < n; ++i)
    std::copy_n(xv.ptr() + (i * c + c0) * plane, cs * plane, out.ptr() + i * cs * plane);
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i)
      kernels::axpy(1.0, self.grad.ptr() + i * cs * plane,
                    g.ptr() + (i * c + c0) * plane, static_cast<std::size_t>(cs * plane));
  }));
}

Var crop_hw(const Var& x, std::int64_t h, std::int64_t w) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4 || h <= 0 || w <= 0 || h > xv.dim(2) || w > xv.dim(3))
    throw std::invalid_argument("crop_hw: bad target size");
  if (h == xv.dim(2) && w == xv.dim(3)) return x;
  const std::int64_t nc = xv.dim(0) * xv.dim(1), xh = xv.dim(2), xw = xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1), h, w});
  for (std::int64_t p = 0; p < nc; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      std::copy_n(xv.ptr() + (p * xh + y) * xw, w, out.ptr() + (p * h + y) * w);
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t p = 0; p < nc; ++p)
      for (std::int64_t y = 0; y < h; ++y)
        kernels::axpy(1.0, self.grad.ptr() + (p * h + y) * w,
                      g.ptr() + (p * xh + y) * xw, static_cast<std::size_t>(w));
  }));
}

Var pixel_shuffle(const Var& x, int r) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4 || xv.dim(1) % (static_cast<std::int64_t>(r) * r) != 0)
    throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
  const std::int64_t n = xv.dim(0), c = xv.dim(1) / (r * r), h = xv.dim(2), w = xv.dim(3);
  Tensor out({n, c, h * r, w * r});
  auto src_index = [=](std::int64_t in, std::int64_t oc, std::int64_t oy,
                       std::int64_t ox) {
    const std::int64_t dy = oy % r, dx = ox % r;
    const std::int64_t ic = (oc * r + dy) * r + dx;
    return ((in * c * r * r + ic) * h + oy / r) * w + ox / r;
  };
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t oc = 0; oc < c; ++oc)
      for (std::int64_t oy = 0; oy < h * r; ++oy)
        for (std::int64_t ox = 0; ox < w * r; ++ox)
          out.ptr()[((in * c + oc) * h * r + oy) * w * r + ox] =
              xv.ptr()[src_index(in, oc, oy, ox)];
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t in = 0; in < n; ++in)
      for (std::int64_t oc = 0; oc < c; ++oc)
        for (std::int64_t oy = 0; oy < h * r; ++oy)
          for (std::int64_t ox = 0; ox < w * r; ++ox)
            g.ptr()[src_index(in, oc, oy, ox)] +=
                self.grad.ptr()[((in * c + oc) * h * r + oy) * w * r + ox];
  }));
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("global_avg_pool: rank");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor out({n, c});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const double* src = xv.ptr() + i * plane;
    double s = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) s += src[p];
    out.data[static_cast<std::size_t>(i)] = s / static_cast<double>(plane);
  }
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::int64_t i = 0; i < n * c; ++i) {
      const double gi = self.grad.data[static_cast<std::size_t>(i)] /
                        static_cast<double>(plane);
      double* dst = g.ptr() + i * plane;
      for (std::int64_t p = 0; p < plane; ++p) dst[p] += gi;
    }
  }));
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta,
                        double eps) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("layer_norm_channels: rank");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (gamma.value().numel() != c || beta.value().numel() != c)
    throw std::invalid_argument("layer_norm_channels: affine size");
  const std::int64_t plane = h * w;
  Tensor out(xv.shape);
  // Per (n, h, w) position: normalize across channels.
  Tensor xhat(xv.shape);
  std::vector<double> inv_std(static_cast<std::size_t>(n * plane));
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t p = 0; p < plane; ++p) {
      double mu = 0.0;
      for (std::int64_t j = 0; j < c; ++j) mu += xv.ptr()[(in * c + j) * plane + p];
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        const double d = xv.ptr()[(in * c + j) * plane + p] - mu;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(in * plane + p)] = is;
      for (std::int64_t j = 0; j < c; ++j) {
        const double xh = (xv.ptr()[(in * c + j) * plane + p] - mu) * is;
        xhat.ptr()[(in * c + j) * plane + p] = xh;
        out.ptr()[(in * c + j) * plane + p] =
            gamma.value().data[static_cast<std::size_t>(j)] * xh +
            beta.value().data[static_cast<std::size_t>(j)];
      }
    }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  auto xhat_shared = std::make_shared<Tensor>(std::move(xhat));
  auto istd_shared = std::make_shared<std::vector<double>>(std::move(inv_std));
  return Var(make_node(std::move(out), {xn, gn, bn}, [=](Node& self) {
    const Tensor& xh = *xhat_shared;
    for (std::int64_t in = 0; in < n; ++in)
      for (std::int64_t p = 0; p < plane; ++p) {
        const double is = (*istd_shared)[static_cast<std::size_t>(in * plane + p)];
        double sum_dg = 0.0, sum_dg_xh = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
          const double dy = self.grad.ptr()[(in * c + j) * plane + p];
          const double gj = gn->value.data[static_cast<std::size_t>(j)];
          const double dxh = dy * gj;
          sum_dg += dxh;
          sum_dg_xh += dxh * xh.ptr()[(in * c + j) * plane + p];
          if (gn->requires_grad)
            gn->ensure_grad().data[static_cast<std::size_t>(j)] +=
                dy * xh.ptr()[(in * c + j) * plane + p];
          if (bn->requires_grad)
            bn->ensure_grad().data[static_cast<std::size_t>(j)] += dy;
        }
        if (xn->requires_grad) {
          auto& g = xn->ensure_grad();
          for (std::int64_t j = 0; j < c; ++j) {
            const double dy = self.grad.ptr()[(in * c + j) * plane + p];
            const double gj = gn->value.data[static_cast<std::size_t>(j)];
            const double dxh = dy * gj;
            const double xhj = xh.ptr()[(in * c + j) * plane + p];
            g.ptr()[(in * c + j) * plane + p] +=
                is * (dxh - (sum_dg + xhj * sum_dg_xh) / static_cast<double>(c));
          }
        }
      }
  }));
}

Var sum_all(const Var& x) {
  Tensor out({1});
  double s = 0.0;
  for (double v : x.value().data) s += v;
  out.data[0] = s;
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    const double gi = self.grad.data[0];
    for (double& v : g.data) v += gi;
  }));
}

Var mean_all(const Var& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel()));
}

Var reshape(const Var& x, std::vector<std::int64_t> shape) {
  if (Tensor::numel_of(shape) != x.value().numel())
    throw std::invalid_argument("reshape: numel mismatch");
  Tensor out = x.value();
  out.shape = std::move(shape);
  NodePtr xn = x.node();
  return Var(make_node(std::move(out), {xn}, [=](Node& self) {
    kernels::axpy(1.0, self.grad.ptr(), xn->ensure_grad().ptr(),
                  self.grad.data.size());
  }));
}

}  // namespace lightbsr::ad
