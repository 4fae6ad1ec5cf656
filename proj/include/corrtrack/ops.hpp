#pragma once

#include <cstddef>
#include <vector>

#include "corrtrack/tensor.hpp"

namespace corrtrack {

// Differentiable op layer. Every op validates shapes, computes the forward
// result eagerly, rejects non-finite outputs, and (when a GradientTape is
// active and an input requires grad) records a backward closure. Backward
// closures call plain kernels only, so the reverse pass never grows the tape.

// ---- matrix ops ----

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);

// ---- elementwise (same shape) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// Elementwise min/max; on ties the gradient routes to the first argument.
Tensor min_ew(const Tensor& a, const Tensor& b);
Tensor max_ew(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor abs_ew(const Tensor& a);

// ---- scalar-constant forms ----

Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

// ---- broadcast ----

/// a[m,n] + v[n] per row.
Tensor add_rowvec(const Tensor& a, const Tensor& v);

// ---- normalization ----

/// Row-wise softmax of a 2-D tensor with max-subtraction. Each output row
/// sums to 1 up to rounding.
Tensor softmax_rows(const Tensor& a);

/// Normalizes each row of x[n,c] to zero mean / unit variance (population
/// variance), then scales by gamma[c] and shifts by beta[c].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// ---- reductions & shape ----

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
/// Same data, new extents (element count must match).
Tensor reshape(const Tensor& a, Shape shape);

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// ---- composites ----

/// x[n,in] * w[in,out] + b[out]. Pass an undefined b for a bias-free map.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- convolution ----

/// Unfolds x (rank-3, [c,h,w]) into patch rows: output
/// [h_out*w_out, c*kh*kw] with zero padding. Backward scatter-adds.
Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw,
              std::size_t stride, std::size_t pad);

/// 3x3-style conv as im2col + matmul. x [c_in,h,w], w [c_in*kh*kw, c_out],
/// b [c_out] (optional). Returns token layout [h_out*w_out, c_out].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t c_in, std::size_t h, std::size_t w_in,
              std::size_t kh, std::size_t kw, std::size_t stride,
              std::size_t pad);

// ---- RoI pooling ----

/// Bilinear-sampled RoI pooling over a token feature map x[h*w, c].
/// box = {x0, y0, x1, y1} in [0,1] normalized frame coordinates (constant,
/// not differentiated). Each of the pool x pool bins averages a 2x2 grid of
/// bilinear samples. Returns [pool*pool, c].
Tensor roi_pool_bilinear(const Tensor& x, std::size_t h, std::size_t w,
                         const double box[4], std::size_t pool);

// ---- softmax audit ----

/// While a scope is alive, every softmax_rows call reports its worst
/// |row_sum - 1| into the scope. Used to audit normalization across a
/// whole forward pass.
class SoftmaxAuditScope {
 public:
  SoftmaxAuditScope();
  ~SoftmaxAuditScope();
  SoftmaxAuditScope(const SoftmaxAuditScope&) = delete;
  SoftmaxAuditScope& operator=(const SoftmaxAuditScope&) = delete;

  double max_row_deviation() const;
  std::size_t rows_seen() const;
};

namespace detail {
/// Throws NumericError if any element is NaN/Inf. Ops call this on their
/// outputs; exposed for composite code that fills buffers by hand.
void check_finite(const Tensor& t, const char* op_name);
}  // namespace detail

}  // namespace corrtrack
