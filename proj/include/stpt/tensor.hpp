// stpt/tensor.hpp
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

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace stpt {

class Rng;

// Shapes are small; rank is 2 for almost everything, 4 for conv activations.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;  // pulls this->grad into parents' grads

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Reverse-mode autodiff tensor, double precision, value-semantic handle to a
// shared node. Graphs are built per forward pass and discarded after
// backward(); parameters are leaf tensors whose grad buffers persist until the
// optimizer clears them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);
  // Column vector (n,1) holding 0,1,...,n-1.
  static Tensor arange_col(int n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> value() const { return node_->value; }
  // Mutable access is for parameter initialization and optimizer updates only;
  // mutating a non-leaf invalidates any recorded graph.
  std::span<double> value_mut() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void clear_grad() { node_->grad.clear(); }

  double item() const;
  double at(int r, int c) const;

  // Runs reverse-mode accumulation from this scalar root.
  void backward() const;

  // Value copy detached from any graph.
  Tensor detach() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

  // Internal: used by op builders.
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// --- broadcast over a (R,C) matrix ---
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // v is (1,C)
Tensor mul_rowvec(const Tensor& a, const Tensor& v);
Tensor add_colvec(const Tensor& a, const Tensor& u);  // u is (R,1)
Tensor mul_colvec(const Tensor& a, const Tensor& u);

// --- matrix / structural ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor diagonal(const Tensor& a);                       // (min(R,C),1)
Tensor gather_cols(const Tensor& a, std::vector<int> idx);  // (R,1), idx per row

// --- reductions ---
Tensor sum_all(const Tensor& a);   // scalar (1,1)
Tensor mean_all(const Tensor& a);  // scalar (1,1)
Tensor row_sum(const Tensor& a);   // (R,1)
Tensor row_mean(const Tensor& a);  // (R,1)
Tensor col_mean(const Tensor& a);  // (1,C)

// --- softmax family (row-wise, max-subtracted) ---
Tensor softmax_rows(const Tensor& a);
Tensor logsumexp_rows(const Tensor& a);  // (R,1)

// Keeps entries where keep[i] != 0, replaces others with fill. keep.size()
// must equal numel; the mask is a constant.
Tensor mask_fill(const Tensor& a, const std::vector<uint8_t>& keep, double fill);

// --- conv ---
// x: (N,C,H,W), w: (O,C,kh,kw), b: (O) or undefined => (N,O,OH,OW)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor mean_pool_hw(const Tensor& x);  // (N,C,H,W) -> (N,C)

// Elementwise Huber against constant targets; smooth at the |r| = delta seam.
Tensor huber_elementwise(const Tensor& pred, const std::vector<double>& target, double delta);

// ||u_i - v_j||^2 for all pairs; composed from differentiable primitives.
Tensor pairwise_sqdist(const Tensor& u, const Tensor& v);

// Row-wise L2 normalization; fails on rows with norm below 1e-12.
Tensor l2_normalize_rows(const Tensor& a);

}  // namespace stpt
