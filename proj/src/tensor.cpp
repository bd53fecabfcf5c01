// tensor.cpp
//
// Copyright 2026 The stpt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stpt/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "stpt/error.hpp"
#include "stpt/rng.hpp"

namespace stpt {

namespace {

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

NodePtr alloc_node(Shape shape) {
  auto n = std::make_shared<Node>();
  int64_t count = shape_numel(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), 0.0);
  return n;
}

bool wire_parents(const NodePtr& out, std::vector<NodePtr> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (rg) {
    out->requires_grad = true;
    out->parents = std::move(parents);
  }
  return rg;
}

void check_rank2(const Tensor& a, const char* op) {
  require(a.rank() == 2, ErrorCategory::kIntegrity, std::string(op) + ": rank-2 tensor expected");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCategory::kIntegrity,
          std::string(op) + ": shape mismatch");
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    require(d >= 0, ErrorCategory::kIntegrity, "negative dimension");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1, 1}, v, requires_grad); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  int64_t count = shape_numel(shape);
  require(static_cast<int64_t>(data.size()) == count, ErrorCategory::kIntegrity,
          "from_data: size mismatch");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  for (double& v : n->value) v = rng.normal() * stddev;
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::arange_col(int n) {
  auto node = alloc_node({n, 1});
  for (int i = 0; i < n; ++i) node->value[static_cast<size_t>(i)] = static_cast<double>(i);
  return Tensor(node);
}

double Tensor::item() const {
  require(numel() == 1, ErrorCategory::kInternal, "item(): tensor is not scalar");
  return node_->value[0];
}

double Tensor::at(int r, int c) const {
  require(rank() == 2, ErrorCategory::kInternal, "at(): rank-2 expected");
  return node_->value[static_cast<size_t>(r) * dim(1) + c];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(n);
}

void Tensor::backward() const {
  require(numel() == 1, ErrorCategory::kInternal, "backward(): root must be scalar");
  // Post-order DFS so each node appears after all of its parents, then run the
  // backward closures in reverse.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i].get();
      ++i;
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn();
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd dfdx) {
  (void)name;
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i]);
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, dfdx]() {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * dfdx(an->value[i], o->value[i]);
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  if (wire_parents(out, {a.node(), b.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [o, an, bn]() {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
  if (wire_parents(out, {a.node(), b.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [o, an, bn]() {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  if (wire_parents(out, {a.node(), b.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [o, an, bn]() {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * an->value[i];
      }
    };
  }
  return Tensor(out);
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] / bv[i];
  if (wire_parents(out, {a.node(), b.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [o, an, bn]() {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] / bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
          g[i] -= o->grad[i] * o->value[i] / bn->value[i];
      }
    };
  }
  return Tensor(out);
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, "add_scalar", [c](double x) { return x + c; },
                  [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(a, "mul_scalar", [c](double x) { return x * c; },
                  [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, "exp", [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(a, "log", [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(a, "sqrt", [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, "square", [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(a, "clamp_min", [lo](double x) { return x < lo ? lo : x; },
                  [lo](double x, double) { return x >= lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// broadcast
// ---------------------------------------------------------------------------

namespace {

enum class BcastKind { kRow, kCol };
enum class BcastOp { kAdd, kMul };

Tensor bcast(const Tensor& a, const Tensor& v, BcastKind kind, BcastOp op, const char* name) {
  check_rank2(a, name);
  check_rank2(v, name);
  const int rows = a.dim(0), cols = a.dim(1);
  if (kind == BcastKind::kRow) {
    require(v.dim(0) == 1 && v.dim(1) == cols, ErrorCategory::kIntegrity,
            std::string(name) + ": rowvec shape mismatch");
  } else {
    require(v.dim(0) == rows && v.dim(1) == 1, ErrorCategory::kIntegrity,
            std::string(name) + ": colvec shape mismatch");
  }
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  const auto& vv = v.node()->value;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      size_t i = static_cast<size_t>(r) * cols + c;
      double b = (kind == BcastKind::kRow) ? vv[static_cast<size_t>(c)]
                                           : vv[static_cast<size_t>(r)];
      out->value[i] = (op == BcastOp::kAdd) ? av[i] + b : av[i] * b;
    }
  }
  if (wire_parents(out, {a.node(), v.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* vn = v.node().get();
    out->backward_fn = [o, an, vn, rows, cols, kind, op]() {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            size_t i = static_cast<size_t>(r) * cols + c;
            double b = (kind == BcastKind::kRow) ? vn->value[static_cast<size_t>(c)]
                                                 : vn->value[static_cast<size_t>(r)];
            g[i] += (op == BcastOp::kAdd) ? o->grad[i] : o->grad[i] * b;
          }
        }
      }
      if (vn->requires_grad) {
        auto& g = vn->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            size_t i = static_cast<size_t>(r) * cols + c;
            size_t j = (kind == BcastKind::kRow) ? static_cast<size_t>(c)
                                                 : static_cast<size_t>(r);
            g[j] += (op == BcastOp::kAdd) ? o->grad[i] : o->grad[i] * an->value[i];
          }
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  return bcast(a, v, BcastKind::kRow, BcastOp::kAdd, "add_rowvec");
}
Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  return bcast(a, v, BcastKind::kRow, BcastOp::kMul, "mul_rowvec");
}
Tensor add_colvec(const Tensor& a, const Tensor& u) {
  return bcast(a, u, BcastKind::kCol, BcastOp::kAdd, "add_colvec");
}
Tensor mul_colvec(const Tensor& a, const Tensor& u) {
  return bcast(a, u, BcastKind::kCol, BcastOp::kMul, "mul_colvec");
}

// ---------------------------------------------------------------------------
// matrix / structural
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, ErrorCategory::kIntegrity, "matmul: inner dimension mismatch");
  auto out = alloc_node({m, n});
  {
    CMap am(a.node()->value.data(), m, k);
    CMap bm(b.node()->value.data(), k, n);
    MMap om(out->value.data(), m, n);
    om.noalias() = am * bm;
  }
  if (wire_parents(out, {a.node(), b.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [o, an, bn, m, k, n]() {
      CMap gm(o->grad.data(), m, n);
      if (an->requires_grad) {
        MMap ga(an->ensure_grad().data(), m, k);
        CMap bm(bn->value.data(), k, n);
        ga.noalias() += gm * bm.transpose();
      }
      if (bn->requires_grad) {
        MMap gb(bn->ensure_grad().data(), k, n);
        CMap am(an->value.data(), m, k);
        gb.noalias() += am.transpose() * gm;
      }
    };
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  check_rank2(a, "transpose");
  const int r = a.dim(0), c = a.dim(1);
  auto out = alloc_node({c, r});
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->value[static_cast<size_t>(j) * r + i] = av[static_cast<size_t>(i) * c + j];
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r, c]() {
      auto& g = an->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          g[static_cast<size_t>(i) * c + j] += o->grad[static_cast<size_t>(j) * r + i];
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), ErrorCategory::kIntegrity,
          "reshape: element count mismatch");
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = a.node()->value;
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an]() {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  check_rank2(a, "slice_rows");
  require(0 <= r0 && r0 <= r1 && r1 <= a.dim(0), ErrorCategory::kIntegrity,
          "slice_rows: bad range");
  const int c = a.dim(1);
  auto out = alloc_node({r1 - r0, c});
  const auto& av = a.node()->value;
  std::copy(av.begin() + static_cast<size_t>(r0) * c, av.begin() + static_cast<size_t>(r1) * c,
            out->value.begin());
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r0, c]() {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) g[static_cast<size_t>(r0) * c + i] += o->grad[i];
    };
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  check_rank2(a, "slice_cols");
  require(0 <= c0 && c0 <= c1 && c1 <= a.dim(1), ErrorCategory::kIntegrity,
          "slice_cols: bad range");
  const int r = a.dim(0), c = a.dim(1), w = c1 - c0;
  auto out = alloc_node({r, w});
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j)
      out->value[static_cast<size_t>(i) * w + j] = av[static_cast<size_t>(i) * c + c0 + j];
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r, c, c0, w]() {
      auto& g = an->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          g[static_cast<size_t>(i) * c + c0 + j] += o->grad[static_cast<size_t>(i) * w + j];
    };
  }
  return Tensor(out);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorCategory::kIntegrity, "concat_rows: empty input");
  const int c = parts[0].dim(1);
  int rows = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    check_rank2(p, "concat_rows");
    require(p.dim(1) == c, ErrorCategory::kIntegrity, "concat_rows: column mismatch");
    rows += p.dim(0);
    parents.push_back(p.node());
  }
  auto out = alloc_node({rows, c});
  size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.node()->value;
    std::copy(pv.begin(), pv.end(), out->value.begin() + static_cast<ptrdiff_t>(offset));
    offset += pv.size();
  }
  std::vector<NodePtr> parents_copy = parents;
  if (wire_parents(out, std::move(parents_copy))) {
    Node* o = out.get();
    out->backward_fn = [o, parents]() {
      size_t off = 0;
      for (const auto& p : parents) {
        size_t n = p->value.size();
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          for (size_t i = 0; i < n; ++i) g[i] += o->grad[off + i];
        }
        off += n;
      }
    };
  }
  return Tensor(out);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorCategory::kIntegrity, "concat_cols: empty input");
  const int r = parts[0].dim(0);
  int cols = 0;
  std::vector<NodePtr> parents;
  std::vector<int> widths;
  for (const auto& p : parts) {
    check_rank2(p, "concat_cols");
    require(p.dim(0) == r, ErrorCategory::kIntegrity, "concat_cols: row mismatch");
    cols += p.dim(1);
    widths.push_back(p.dim(1));
    parents.push_back(p.node());
  }
  auto out = alloc_node({r, cols});
  int coff = 0;
  for (size_t k = 0; k < parents.size(); ++k) {
    const auto& pv = parents[k]->value;
    const int w = widths[k];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        out->value[static_cast<size_t>(i) * cols + coff + j] = pv[static_cast<size_t>(i) * w + j];
    coff += w;
  }
  std::vector<NodePtr> parents_copy = parents;
  if (wire_parents(out, std::move(parents_copy))) {
    Node* o = out.get();
    out->backward_fn = [o, parents, widths, r, cols]() {
      int coff2 = 0;
      for (size_t k = 0; k < parents.size(); ++k) {
        const int w = widths[k];
        if (parents[k]->requires_grad) {
          auto& g = parents[k]->ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
              g[static_cast<size_t>(i) * w + j] +=
                  o->grad[static_cast<size_t>(i) * cols + coff2 + j];
        }
        coff2 += w;
      }
    };
  }
  return Tensor(out);
}

Tensor diagonal(const Tensor& a) {
  check_rank2(a, "diagonal");
  const int r = a.dim(0), c = a.dim(1);
  const int n = std::min(r, c);
  auto out = alloc_node({n, 1});
  for (int i = 0; i < n; ++i)
    out->value[static_cast<size_t>(i)] = a.node()->value[static_cast<size_t>(i) * c + i];
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, n, c]() {
      auto& g = an->ensure_grad();
      for (int i = 0; i < n; ++i) g[static_cast<size_t>(i) * c + i] += o->grad[static_cast<size_t>(i)];
    };
  }
  return Tensor(out);
}

Tensor gather_cols(const Tensor& a, std::vector<int> idx) {
  check_rank2(a, "gather_cols");
  const int r = a.dim(0), c = a.dim(1);
  require(static_cast<int>(idx.size()) == r, ErrorCategory::kIntegrity,
          "gather_cols: index count mismatch");
  for (int j : idx)
    require(0 <= j && j < c, ErrorCategory::kIntegrity, "gather_cols: index out of range");
  auto out = alloc_node({r, 1});
  for (int i = 0; i < r; ++i)
    out->value[static_cast<size_t>(i)] =
        a.node()->value[static_cast<size_t>(i) * c + idx[static_cast<size_t>(i)]];
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, idx = std::move(idx), c]() {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < idx.size(); ++i)
        g[i * c + static_cast<size_t>(idx[i])] += o->grad[i];
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  auto out = alloc_node({1, 1});
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  out->value[0] = s;
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an]() {
      auto& g = an->ensure_grad();
      for (double& v : g) v += o->grad[0];
    };
  }
  return Tensor(out);
}

Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor row_sum(const Tensor& a) {
  check_rank2(a, "row_sum");
  const int r = a.dim(0), c = a.dim(1);
  auto out = alloc_node({r, 1});
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += av[static_cast<size_t>(i) * c + j];
    out->value[static_cast<size_t>(i)] = s;
  }
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r, c]() {
      auto& g = an->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g[static_cast<size_t>(i) * c + j] += o->grad[static_cast<size_t>(i)];
    };
  }
  return Tensor(out);
}

Tensor row_mean(const Tensor& a) {
  return mul_scalar(row_sum(a), 1.0 / static_cast<double>(a.dim(1)));
}

Tensor col_mean(const Tensor& a) {
  check_rank2(a, "col_mean");
  const int r = a.dim(0), c = a.dim(1);
  auto out = alloc_node({1, c});
  const auto& av = a.node()->value;
  for (int j = 0; j < c; ++j) {
    double s = 0.0;
    for (int i = 0; i < r; ++i) s += av[static_cast<size_t>(i) * c + j];
    out->value[static_cast<size_t>(j)] = s / r;
  }
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r, c]() {
      auto& g = an->ensure_grad();
      const double inv = 1.0 / r;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          g[static_cast<size_t>(i) * c + j] += o->grad[static_cast<size_t>(j)] * inv;
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  check_rank2(a, "softmax_rows");
  const int r = a.dim(0), c = a.dim(1);
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i) {
    const size_t base = static_cast<size_t>(i) * c;
    double m = av[base];
    for (int j = 1; j < c; ++j) m = std::max(m, av[base + j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      double e = std::exp(av[base + j] - m);
      out->value[base + j] = e;
      s += e;
    }
    for (int j = 0; j < c; ++j) out->value[base + j] /= s;
  }
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r, c]() {
      auto& g = an->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += o->grad[base + j] * o->value[base + j];
        for (int j = 0; j < c; ++j)
          g[base + j] += o->value[base + j] * (o->grad[base + j] - dot);
      }
    };
  }
  return Tensor(out);
}

Tensor logsumexp_rows(const Tensor& a) {
  check_rank2(a, "logsumexp_rows");
  const int r = a.dim(0), c = a.dim(1);
  auto out = alloc_node({r, 1});
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i) {
    const size_t base = static_cast<size_t>(i) * c;
    double m = av[base];
    for (int j = 1; j < c; ++j) m = std::max(m, av[base + j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(av[base + j] - m);
    out->value[static_cast<size_t>(i)] = m + std::log(s);
  }
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, r, c]() {
      auto& g = an->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        const double lse = o->value[static_cast<size_t>(i)];
        const double gi = o->grad[static_cast<size_t>(i)];
        for (int j = 0; j < c; ++j) g[base + j] += gi * std::exp(an->value[base + j] - lse);
      }
    };
  }
  return Tensor(out);
}

Tensor mask_fill(const Tensor& a, const std::vector<uint8_t>& keep, double fill) {
  require(keep.size() == static_cast<size_t>(a.numel()), ErrorCategory::kIntegrity,
          "mask_fill: mask size mismatch");
  auto out = alloc_node(a.shape());
  const auto& av = a.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = keep[i] ? av[i] : fill;
  if (wire_parents(out, {a.node()})) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward_fn = [o, an, keep]() {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (keep[i]) g[i] += o->grad[i];
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// conv
// ---------------------------------------------------------------------------

namespace {

void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
            int OW, double* cols) {
  // cols layout: ((c*kh+ky)*kw+kx) x (oy*OW+ox)
  const int ncols = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* row = cols + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) * ncols;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * OW + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    ? x[(static_cast<size_t>(c) * H + iy) * W + ix]
                                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int OH, int OW, double* gx) {
  const int ncols = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* row = cols + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) * ncols;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            gx[(static_cast<size_t>(c) * H + iy) * W + ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require(x.rank() == 4, ErrorCategory::kIntegrity, "conv2d: input must be (N,C,H,W)");
  require(w.rank() == 4, ErrorCategory::kIntegrity, "conv2d: weight must be (O,C,kh,kw)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == C, ErrorCategory::kIntegrity, "conv2d: channel mismatch");
  require(stride >= 1, ErrorCategory::kIntegrity, "conv2d: bad stride");
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  require(OH > 0 && OW > 0, ErrorCategory::kIntegrity, "conv2d: empty output");
  const bool has_bias = b.defined();
  if (has_bias)
    require(b.numel() == O, ErrorCategory::kIntegrity, "conv2d: bias size mismatch");

  auto out = alloc_node({N, O, OH, OW});
  const int ckk = C * kh * kw;
  const int ncols = OH * OW;
  const size_t xplane = static_cast<size_t>(C) * H * W;
  const size_t oplane = static_cast<size_t>(O) * OH * OW;

  bool rg = x.requires_grad() || w.requires_grad() || (has_bias && b.requires_grad());
  // Cache im2col buffers for the backward pass only when gradients are needed.
  auto cached = std::make_shared<std::vector<std::vector<double>>>();
  std::vector<double> scratch;
  if (!rg) scratch.resize(static_cast<size_t>(ckk) * ncols);

  for (int n = 0; n < N; ++n) {
    double* colbuf;
    if (rg) {
      cached->emplace_back(static_cast<size_t>(ckk) * ncols);
      colbuf = cached->back().data();
    } else {
      colbuf = scratch.data();
    }
    im2col(x.node()->value.data() + static_cast<size_t>(n) * xplane, C, H, W, kh, kw, stride, pad,
           OH, OW, colbuf);
    CMap wm(w.node()->value.data(), O, ckk);
    CMap cm(colbuf, ckk, ncols);
    MMap om(out->value.data() + static_cast<size_t>(n) * oplane, O, ncols);
    om.noalias() = wm * cm;
    if (has_bias) {
      const auto& bv = b.node()->value;
      for (int o = 0; o < O; ++o) {
        double* row = out->value.data() + static_cast<size_t>(n) * oplane +
                      static_cast<size_t>(o) * ncols;
        for (int i = 0; i < ncols; ++i) row[i] += bv[static_cast<size_t>(o)];
      }
    }
  }

  std::vector<NodePtr> parents = {x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  if (wire_parents(out, std::move(parents))) {
    Node* o = out.get();
    Node* xn = x.node().get();
    Node* wn = w.node().get();
    Node* bn = has_bias ? b.node().get() : nullptr;
    out->backward_fn = [o, xn, wn, bn, cached, N, C, H, W, O, kh, kw, stride, pad, OH, OW, ckk,
                        ncols, xplane, oplane]() {
      for (int n = 0; n < N; ++n) {
        CMap gy(o->grad.data() + static_cast<size_t>(n) * oplane, O, ncols);
        if (wn->requires_grad) {
          MMap gw(wn->ensure_grad().data(), O, ckk);
          CMap cm((*cached)[static_cast<size_t>(n)].data(), ckk, ncols);
          gw.noalias() += gy * cm.transpose();
        }
        if (bn && bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (int oc = 0; oc < O; ++oc) {
            double s = 0.0;
            const double* row = o->grad.data() + static_cast<size_t>(n) * oplane +
                                static_cast<size_t>(oc) * ncols;
            for (int i = 0; i < ncols; ++i) s += row[i];
            gb[static_cast<size_t>(oc)] += s;
          }
        }
        if (xn->requires_grad) {
          std::vector<double> dcols(static_cast<size_t>(ckk) * ncols);
          CMap wm(wn->value.data(), O, ckk);
          MMap dc(dcols.data(), ckk, ncols);
          dc.noalias() = wm.transpose() * gy;
          col2im_add(dcols.data(), C, H, W, kh, kw, stride, pad, OH, OW,
                     xn->ensure_grad().data() + static_cast<size_t>(n) * xplane);
        }
      }
    };
  }
  return Tensor(out);
}

Tensor mean_pool_hw(const Tensor& x) {
  require(x.rank() == 4, ErrorCategory::kIntegrity, "mean_pool_hw: input must be (N,C,H,W)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int hw = H * W;
  auto out = alloc_node({N, C});
  const auto& xv = x.node()->value;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* p = xv.data() + (static_cast<size_t>(n) * C + c) * hw;
      double s = 0.0;
      for (int i = 0; i < hw; ++i) s += p[i];
      out->value[static_cast<size_t>(n) * C + c] = s / hw;
    }
  }
  if (wire_parents(out, {x.node()})) {
    Node* o = out.get();
    Node* xn = x.node().get();
    out->backward_fn = [o, xn, N, C, hw]() {
      auto& g = xn->ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
          const double gv = o->grad[static_cast<size_t>(n) * C + c] / hw;
          double* p = g.data() + (static_cast<size_t>(n) * C + c) * hw;
          for (int i = 0; i < hw; ++i) p[i] += gv;
        }
      }
    };
  }
  return Tensor(out);
}

Tensor huber_elementwise(const Tensor& pred, const std::vector<double>& target, double delta) {
  require(delta > 0.0, ErrorCategory::kIntegrity, "huber: delta must be positive");
  require(target.size() == static_cast<size_t>(pred.numel()), ErrorCategory::kIntegrity,
          "huber: target size mismatch");
  auto out = alloc_node(pred.shape());
  const auto& pv = pred.node()->value;
  for (size_t i = 0; i < pv.size(); ++i) {
    const double r = pv[i] - target[i];
    const double ar = std::abs(r);
    out->value[i] = (ar <= delta) ? 0.5 * r * r : delta * (ar - 0.5 * delta);
  }
  if (wire_parents(out, {pred.node()})) {
    Node* o = out.get();
    Node* pn = pred.node().get();
    out->backward_fn = [o, pn, target, delta]() {
      auto& g = pn->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const double r = pn->value[i] - target[i];
        const double d = (std::abs(r) <= delta) ? r : (r > 0.0 ? delta : -delta);
        g[i] += o->grad[i] * d;
      }
    };
  }
  return Tensor(out);
}

Tensor pairwise_sqdist(const Tensor& u, const Tensor& v) {
  check_rank2(u, "pairwise_sqdist");
  check_rank2(v, "pairwise_sqdist");
  require(u.dim(1) == v.dim(1), ErrorCategory::kIntegrity,
          "pairwise_sqdist: embedding width mismatch");
  Tensor u2 = row_sum(square(u));                       // (Tu,1)
  Tensor v2t = transpose(row_sum(square(v)));           // (1,Tv)
  Tensor cross = mul_scalar(matmul(u, transpose(v)), -2.0);
  return add_rowvec(add_colvec(cross, u2), v2t);
}

Tensor l2_normalize_rows(const Tensor& a) {
  check_rank2(a, "l2_normalize_rows");
  Tensor norms = sqrt(row_sum(square(a)));  // (R,1)
  for (double n : norms.value())
    require(n > 1e-12, ErrorCategory::kNumeric, "l2_normalize_rows: zero-norm row");
  Tensor inv = div(Tensor::full({a.dim(0), 1}, 1.0), norms);
  return mul_colvec(a, inv);
}

}  // namespace stpt
