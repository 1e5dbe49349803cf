#pragma once

#include <functional>
#include <span>

#include "ad/tape.hpp"
#include "ad/tensor.hpp"

namespace optlab::ad {

// Elementwise binary ops. Shapes must match exactly, except that either
// side may be a scalar (numel 1), which broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
inline Tensor sub(const Tensor& a, double c) { return sub(a, Tensor::scalar(c)); }
inline Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
inline Tensor mul(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
inline Tensor div(double c, const Tensor& a) { return div(Tensor::scalar(c), a); }

Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);        // domain error on negative entries
Tensor reciprocal(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);         // domain error on negative entries
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);         // alpha = 1

// (m x k) * (k x n); flags transpose the stored operand.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// (r x c) + row vector (c), broadcast down the rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor concat_cols(std::span<const Tensor> parts);      // along the last axis
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& a, Shape shape);           // view, no copy
Tensor tile_cols(const Tensor& v, std::size_t n);       // (r) -> (r x n)

Tensor row_sum(const Tensor& a);      // (r x c) -> (r)
Tensor reduce_sum(const Tensor& a);   // -> scalar
Tensor reduce_mean(const Tensor& a);  // -> scalar
Tensor l2_norm(const Tensor& a);      // Euclidean norm of all entries -> scalar
Tensor normalize_l2(const Tensor& a); // a / ||a||, zero tensor stays zero

Tensor softmax_rows(const Tensor& logits);
// Mean cross-entropy over rows, shifted-max stable. labels are one-hot and
// treated as non-differentiable.
Tensor softmax_xent(const Tensor& logits, const Tensor& onehot);
// Mean squared error over all entries.
Tensor squared_error(const Tensor& pred, const Tensor& target);

Tensor clamp_max(const Tensor& a, double cap);
Tensor stop_gradient(const Tensor& a);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function built from the ops above.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);
double grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                  std::span<const Tensor> xs, double h);

}  // namespace optlab::ad
