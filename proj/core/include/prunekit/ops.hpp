#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// ---- dense linear algebra -------------------------------------------------

// c = a · b for a [m,k], b [k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// c = a · bᵀ for a [m,k], b [n,k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// c = aᵀ · b for a [k,m], b [k,n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// ---- convolution ----------------------------------------------------------

// Direct sliding-window cross-correlation; the reference route.
// x [N,C,H,W], w [O,C,kh,kw] -> [N,O,Ho,Wo] with
// Ho = (H + 2*pad - kh)/stride + 1 (floor), likewise Wo. Output dims must be
// positive; stride must be >= 1.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad);

// Same contract computed via im2col + GEMM; the fast route used in training.
// Agrees with conv2d to within accumulation-order rounding.
Tensor conv2d_gemm(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad);

// Patch matrix [C*kh*kw, N*Ho*Wo]; column index is (n, ho, wo) row-major.
Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad);
// Adjoint of im2col: scatters columns back into an [N,C,H,W] tensor.
Tensor col2im(const Tensor& cols, std::size_t n, std::size_t c, std::size_t h, std::size_t w,
              std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad);

struct ConvGrads {
    Tensor grad_input;   // [N,C,H,W]
    Tensor grad_weight;  // [O,C,kh,kw]
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                          std::size_t stride, std::size_t pad);

// ---- activations and loss -------------------------------------------------

Tensor relu(const Tensor& x);
// grad(x_pre <= 0) = 0.
Tensor relu_backward(const Tensor& x_pre, const Tensor& grad_out);

struct SoftmaxLoss {
    double loss;       // mean cross-entropy over the batch
    Tensor grad;       // d(loss)/d(logits), shape of logits
};
// logits [N,C]; labels size N with values in [0, C). Log-sum-exp stabilized.
SoftmaxLoss softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---- reductions -----------------------------------------------------------

double sum(const Tensor& x);
double mean(const Tensor& x);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Cosine of the angle between two equal-length vectors. If either norm is
// below 1e-12 the direction is undefined and 0 is returned.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// ---- elementwise ----------------------------------------------------------

Tensor hadamard(const Tensor& a, const Tensor& b);
void add_scaled(Tensor& acc, const Tensor& x, double scale);  // acc += scale * x

// ---- top-k selection ------------------------------------------------------

// Number of entries a keep fraction retains: ceil(f * n). f must be in (0, 1].
std::size_t topk_keep_count(std::size_t n, double keep_fraction);

// Flat indices of the kept entries, ascending. Order of precedence: larger
// value wins; equal values are won by the smaller flat index. The kept set is
// therefore unique, and for f1 <= f2 the f1-set is a subset of the f2-set.
std::vector<std::size_t> topk_select(std::span<const double> scores, double keep_fraction);

// Value of the weakest kept entry under the same precedence. When no value is
// duplicated at the boundary, exactly ceil(f*n) entries compare >= to it.
double topk_threshold(std::span<const double> scores, double keep_fraction);

// Throws NumericError naming `who` if any element is NaN or infinite.
void require_finite(const Tensor& x, const char* who);
void require_finite(double x, const char* who);

}  // namespace prunekit
