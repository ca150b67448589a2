// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>
#include <utility>

#include "forcedistill/common/error.hpp"
#include "forcedistill/numerics/kernels.hpp"

namespace forcedistill::ad {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

Var make_result(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  }
  node->requires_grad = needs_grad;
  if (needs_grad) {
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward);
  }
  return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void check_defined(const Var& v, const char* op) {
  if (!v.defined()) throw InputError(std::string(op) + ": undefined operand");
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Real Var::item() const {
  if (value().size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return value()[0];
}

void Var::backward() const {
  if (value().size() != 1) {
    throw DimensionError("backward() needs a scalar, got " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var matmul(const Var& a, const Var& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.value().rank() != 2 || b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return make_result(std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const Real* g = self.grad.data().data();
    if (an.requires_grad) kernels::gemm_nt(g, bn.value.data().data(), an.grad_buffer().data().data(), m, n, k);
    if (bn.requires_grad) kernels::gemm_tn(an.value.data().data(), g, bn.grad_buffer().data().data(), m, k, n);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto& bv = b.value().storage();
  auto& ov = out.storage();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer().storage();
      const auto& sg = self.grad.storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sg[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto& bv = b.value().storage();
  auto& ov = out.storage();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& sg = self.grad.storage();
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sg[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= sg[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bv = b.value().storage();
  auto& ov = out.storage();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& sg = self.grad.storage();
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) {
      auto& g = an.grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sg[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sg[i] * an.value[i];
    }
  });
}

Var scale(const Var& a, Real factor) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v *= factor;
  return make_result(std::move(out), {a.node()}, [factor](Node& self) {
    auto& g = self.inputs[0]->grad_buffer().storage();
    const auto& sg = self.grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * sg[i];
  });
}

Var add_row(const Var& x, const Var& row) {
  const std::size_t m = x.rows(), n = x.cols();
  if (row.value().size() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " vs matrix " +
                         shape_string(x.shape()));
  }
  Tensor out = x.value();
  const auto& rv = row.value().storage();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += rv[j];
  }
  return make_result(std::move(out), {x.node(), row.node()}, [m, n](Node& self) {
    const auto& sg = self.grad.storage();
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sg[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer().storage();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += sg[i * n + j];
    }
  });
}

Var layernorm(const Var& x, const Var& gain, const Var& bias, Real eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw DimensionError("layernorm: empty feature axis");
  if (!(eps > 0)) throw ConfigError("layernorm: eps must be positive");
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layernorm: affine parameters " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<Real> xhat(m * n), rstd(m);
  const auto& g = gain.value().storage();
  const auto& b = bias.value().storage();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row(i);
    Real mean = 0;
    for (auto v : r) mean += v;
    mean /= Real(n);
    Real var = 0;
    for (auto v : r) var += (v - mean) * (v - mean);
    var /= Real(n);
    const Real s = Real(1) / std::sqrt(var + eps);
    rstd[i] = s;
    auto o = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const Real h = (r[j] - mean) * s;
      xhat[i * n + j] = h;
      o[j] = g[j] * h + b[j];
    }
  }
  return make_result(std::move(out), {x.node(), gain.node(), bias.node()},
                     [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       const auto& sg = self.grad.storage();
                       auto& xn = *self.inputs[0];
                       auto& gn = *self.inputs[1];
                       auto& bn = *self.inputs[2];
                       if (gn.requires_grad) {
                         auto& gg = gn.grad_buffer().storage();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gg[j] += sg[i * n + j] * xhat[i * n + j];
                       }
                       if (bn.requires_grad) {
                         auto& gb = bn.grad_buffer().storage();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += sg[i * n + j];
                       }
                       if (xn.requires_grad) {
                         auto& gx = xn.grad_buffer().storage();
                         const auto& gain_v = gn.value.storage();
                         std::vector<Real> dxhat(n);
                         for (std::size_t i = 0; i < m; ++i) {
                           Real m1 = 0, m2 = 0;
                           for (std::size_t j = 0; j < n; ++j) {
                             dxhat[j] = sg[i * n + j] * gain_v[j];
                             m1 += dxhat[j];
                             m2 += dxhat[j] * xhat[i * n + j];
                           }
                           m1 /= Real(n);
                           m2 /= Real(n);
                           for (std::size_t j = 0; j < n; ++j)
                             gx[i * n + j] += rstd[i] * (dxhat[j] - m1 - xhat[i * n + j] * m2);
                         }
                       }
                     });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  constexpr Real inv_sqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
  for (auto& v : out.storage()) v = Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2));
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    constexpr Real inv_sqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
    constexpr Real inv_sqrt2pi = std::numbers::inv_sqrtpi_v<Real> * inv_sqrt2;
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer().storage();
    const auto& sg = self.grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real v = in.value[i];
      const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
      const Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * v * v);
      g[i] += sg[i] * (cdf + v * pdf);
    }
  });
}

Var softmax(const Var& x) {
  const std::size_t m = x.rows(), n = x.cols();
  if (x.value().empty() || n == 0) throw DimensionError("softmax: empty input");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row(i);
    auto o = out.row(i);
    const Real mx = *std::max_element(r.begin(), r.end());
    Real s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(r[j] - mx);
      s += o[j];
    }
    for (auto& v : o) v /= s;
  }
  return make_result(std::move(out), {x.node()}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      auto y = self.value.row(i);
      auto dy = self.grad.row(i);
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      auto gr = g.row(i);
      for (std::size_t j = 0; j < n; ++j) gr[j] += y[j] * (dy[j] - dot);
    }
  });
}

Var sum(const Var& x) {
  Real s = 0;
  for (auto v : x.value().storage()) s += v;
  return make_result(Tensor({1}, std::vector<Real>{s}), {x.node()}, [](Node& self) {
    const Real sg = self.grad[0];
    for (auto& g : self.inputs[0]->grad_buffer().storage()) g += sg;
  });
}

Var squared_l2(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size() || a.cols() != b.cols()) {
    throw DimensionError("squared_l2: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Real s = 0;
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  return make_result(Tensor({1}, std::vector<Real>{s}), {a.node(), b.node()}, [](Node& self) {
    const Real sg = self.grad[0];
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const std::size_t n = an.value.size();
    if (an.requires_grad) {
      auto& g = an.grad_buffer().storage();
      for (std::size_t i = 0; i < n; ++i) g[i] += Real(2) * sg * (an.value[i] - bn.value[i]);
    }
    if (bn.requires_grad) {
      auto& g = bn.grad_buffer().storage();
      for (std::size_t i = 0; i < n; ++i) g[i] -= Real(2) * sg * (an.value[i] - bn.value[i]);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  std::vector<Block> blocks;
  for (const auto& p : parts) blocks.push_back({p, p.rows()});
  return interleave(blocks, 1);
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  return select_rows(x, 1, x.rows(), begin, count);
}

Var tile_rows(const Var& x, std::size_t times) {
  const std::size_t r = x.rows(), n = x.cols();
  if (times == 0) throw DimensionError("tile_rows: zero repetitions");
  Tensor out({times * r, n});
  for (std::size_t t = 0; t < times; ++t)
    std::copy(x.value().storage().begin(), x.value().storage().end(), out.storage().begin() + t * r * n);
  return make_result(std::move(out), {x.node()}, [times, r, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer().storage();
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < r * n; ++i) g[i] += self.grad[t * r * n + i];
  });
}

Var repeat_rows(const Var& x, std::size_t times) {
  const std::size_t r = x.rows(), n = x.cols();
  if (times == 0) throw DimensionError("repeat_rows: zero repetitions");
  Tensor out({r * times, n});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < times; ++t) {
      auto src = x.value().row(i);
      std::copy(src.begin(), src.end(), out.row(i * times + t).begin());
    }
  return make_result(std::move(out), {x.node()}, [times, r, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t t = 0; t < times; ++t) {
        auto src = self.grad.row(i * times + t);
        auto dst = g.row(i);
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
  });
}

Var gather_rows(const Var& table, std::vector<std::size_t> indices) {
  const std::size_t n = table.cols();
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  Tensor out({indices.size(), n});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= table.rows()) throw DimensionError("gather_rows: index out of range");
    auto src = table.value().row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return make_result(std::move(out), {table.node()}, [indices = std::move(indices), n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto src = self.grad.row(i);
      auto dst = g.row(indices[i]);
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

Var interleave(std::span<const Block> blocks, std::size_t batch) {
  if (blocks.empty()) throw DimensionError("interleave: no blocks");
  const std::size_t n = blocks.front().tokens.cols();
  std::size_t per_sample = 0;
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> widths;
  for (const auto& b : blocks) {
    check_defined(b.tokens, "interleave");
    if (b.tokens.cols() != n) {
      throw DimensionError("interleave: width mismatch " + shape_string(b.tokens.shape()) + " vs " +
                           std::to_string(n) + " columns");
    }
    if (b.rows_per_sample == 0 || b.tokens.rows() != batch * b.rows_per_sample) {
      throw DimensionError("interleave: block " + shape_string(b.tokens.shape()) +
                           " is not batch x rows_per_sample");
    }
    per_sample += b.rows_per_sample;
    inputs.push_back(b.tokens.node());
    widths.push_back(b.rows_per_sample);
  }
  Tensor out({batch * per_sample, n});
  for (std::size_t s = 0; s < batch; ++s) {
    std::size_t offset = s * per_sample;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const auto& src = blocks[bi].tokens.value().storage();
      const std::size_t w = widths[bi];
      std::copy(src.begin() + s * w * n, src.begin() + (s + 1) * w * n, out.storage().begin() + offset * n);
      offset += w;
    }
  }
  return make_result(std::move(out), std::move(inputs),
                     [widths = std::move(widths), batch, per_sample, n](Node& self) {
                       for (std::size_t s = 0; s < batch; ++s) {
                         std::size_t offset = s * per_sample;
                         for (std::size_t bi = 0; bi < widths.size(); ++bi) {
                           const std::size_t w = widths[bi];
                           auto& in = *self.inputs[bi];
                           if (in.requires_grad) {
                             auto& g = in.grad_buffer().storage();
                             for (std::size_t i = 0; i < w * n; ++i) g[s * w * n + i] += self.grad[offset * n + i];
                           }
                           offset += w;
                         }
                       }
                     });
}

Var select_rows(const Var& x, std::size_t batch, std::size_t rows_per_sample, std::size_t begin,
                std::size_t count) {
  const std::size_t n = x.cols();
  if (x.rows() != batch * rows_per_sample || count == 0 || begin + count > rows_per_sample) {
    throw DimensionError("select_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(x.shape()));
  }
  Tensor out({batch * count, n});
  for (std::size_t s = 0; s < batch; ++s) {
    const auto first = x.value().storage().begin() + (s * rows_per_sample + begin) * n;
    std::copy(first, first + count * n, out.storage().begin() + s * count * n);
  }
  return make_result(std::move(out), {x.node()}, [batch, rows_per_sample, begin, count, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer().storage();
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t i = 0; i < count * n; ++i)
        g[(s * rows_per_sample + begin) * n + i] += self.grad[s * count * n + i];
  });
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionOptions& opt) {
  const std::size_t B = opt.batch, nq = opt.query_rows, nk = opt.key_rows, H = opt.heads;
  const std::size_t dqk_all = q.cols(), dv_all = v.cols();
  if (H == 0 || dqk_all % H != 0 || dv_all % H != 0) {
    throw DimensionError("attention: widths " + std::to_string(dqk_all) + "/" + std::to_string(dv_all) +
                         " not divisible by " + std::to_string(H) + " heads");
  }
  if (q.rows() != B * nq || k.rows() != B * nk || v.rows() != B * nk || k.cols() != dqk_all) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) + ", v " +
                         shape_string(v.shape()) + " inconsistent with batch layout");
  }
  const std::uint8_t* mask = nullptr;
  if (opt.mask) {
    if (opt.mask->size() != nq * nk) throw DimensionError("attention: mask size does not match query x key rows");
    mask = opt.mask->data();
    for (std::size_t i = 0; i < nq; ++i) {
      if (std::none_of(mask + i * nk, mask + (i + 1) * nk, [](std::uint8_t m) { return m != 0; })) {
        throw ConfigError("attention: mask row " + std::to_string(i) + " permits no column");
      }
    }
  }
  const std::size_t dk = dqk_all / H, dv = dv_all / H;
  const Real sc = Real(1) / std::sqrt(Real(dk));
  const auto& Q = q.value().storage();
  const auto& K = k.value().storage();
  const auto& V = v.value().storage();

  std::vector<Real> alpha(B * H * nq * nk, Real(0));
  Tensor out({B * nq, dv_all});
  std::vector<Real> logits(nk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        const Real* qrow = &Q[(b * nq + i) * dqk_all + h * dk];
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          if (mask && !mask[i * nk + j]) continue;
          const Real* krow = &K[(b * nk + j) * dqk_all + h * dk];
          Real dot = 0;
          for (std::size_t t = 0; t < dk; ++t) dot += qrow[t] * krow[t];
          logits[j] = dot * sc;
          mx = std::max(mx, logits[j]);
        }
        Real* a = &alpha[((b * H + h) * nq + i) * nk];
        Real total = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          if (mask && !mask[i * nk + j]) continue;
          a[j] = std::exp(logits[j] - mx);
          total += a[j];
        }
        Real* orow = &out.storage()[(b * nq + i) * dv_all + h * dv];
        for (std::size_t j = 0; j < nk; ++j) {
          if (mask && !mask[i * nk + j]) continue;
          a[j] /= total;
          const Real* vrow = &V[(b * nk + j) * dv_all + h * dv];
          for (std::size_t t = 0; t < dv; ++t) orow[t] += a[j] * vrow[t];
        }
      }
    }
  }
  if (opt.weights_out) *opt.weights_out = alpha;

  std::vector<std::uint8_t> mask_copy;
  if (mask) mask_copy.assign(mask, mask + nq * nk);
  return make_result(
      std::move(out), {q.node(), k.node(), v.node()},
      [B, nq, nk, H, dk, dv, sc, alpha = std::move(alpha), mask_copy = std::move(mask_copy)](Node& self) {
        auto& qn = *self.inputs[0];
        auto& kn = *self.inputs[1];
        auto& vn = *self.inputs[2];
        const std::size_t dqk_all = dk * H, dv_all = dv * H;
        const auto& Q = qn.value.storage();
        const auto& K = kn.value.storage();
        const auto& V = vn.value.storage();
        Real* gq = qn.requires_grad ? qn.grad_buffer().storage().data() : nullptr;
        Real* gk = kn.requires_grad ? kn.grad_buffer().storage().data() : nullptr;
        Real* gv = vn.requires_grad ? vn.grad_buffer().storage().data() : nullptr;
        const bool masked = !mask_copy.empty();
        std::vector<Real> dlogit(nk);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < nq; ++i) {
              const Real* a = &alpha[((b * H + h) * nq + i) * nk];
              const Real* go = &self.grad.storage()[(b * nq + i) * dv_all + h * dv];
              Real weighted = 0;
              for (std::size_t j = 0; j < nk; ++j) {
                if (masked && !mask_copy[i * nk + j]) {
                  dlogit[j] = 0;
                  continue;
                }
                const Real* vrow = &V[(b * nk + j) * dv_all + h * dv];
                Real da = 0;
                for (std::size_t t = 0; t < dv; ++t) da += go[t] * vrow[t];
                dlogit[j] = da;
                weighted += a[j] * da;
                if (gv) {
                  Real* gvrow = gv + (b * nk + j) * dv_all + h * dv;
                  for (std::size_t t = 0; t < dv; ++t) gvrow[t] += a[j] * go[t];
                }
              }
              const Real* qrow = &Q[(b * nq + i) * dqk_all + h * dk];
              Real* gqrow = gq ? gq + (b * nq + i) * dqk_all + h * dk : nullptr;
              for (std::size_t j = 0; j < nk; ++j) {
                if (masked && !mask_copy[i * nk + j]) continue;
                const Real dl = a[j] * (dlogit[j] - weighted) * sc;
                const Real* krow = &K[(b * nk + j) * dqk_all + h * dk];
                if (gqrow)
                  for (std::size_t t = 0; t < dk; ++t) gqrow[t] += dl * krow[t];
                if (gk) {
                  Real* gkrow = gk + (b * nk + j) * dqk_all + h * dk;
                  for (std::size_t t = 0; t < dk; ++t) gkrow[t] += dl * qrow[t];
                }
              }
            }
          }
        }
      });
}

}  // namespace forcedistill::ad
