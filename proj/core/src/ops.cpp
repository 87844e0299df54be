#include "prunekit/ops.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <stdexcept>
#include <string>

#include "prunekit/errors.hpp"

namespace prunekit {

namespace {

void require_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(who) + ": expected rank-2 tensor, got " + t.shape_str());
    }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(lda),
                b, static_cast<int>(ldb), 0.0, c, static_cast<int>(ldc));
}

struct ConvDims {
    std::size_t n, c, h, w, o, kh, kw, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad, const char* who) {
    if (x.rank() != 4 || w.rank() != 4) {
        throw std::invalid_argument(std::string(who) + ": expected rank-4 input and kernel, got " + x.shape_str() +
                                    " and " + w.shape_str());
    }
    if (stride < 1) throw std::invalid_argument(std::string(who) + ": stride must be >= 1");
    if (x.shape[1] != w.shape[1]) {
        throw std::invalid_argument(std::string(who) + ": channel mismatch, input " + x.shape_str() + " kernel " +
                                    w.shape_str());
    }
    ConvDims d{x.shape[0], x.shape[1], x.shape[2], x.shape[3], w.shape[0], w.shape[2], w.shape[3], 0, 0};
    const std::size_t hp = d.h + 2 * pad;
    const std::size_t wp = d.w + 2 * pad;
    if (hp < d.kh || wp < d.kw) {
        throw std::invalid_argument(std::string(who) + ": kernel larger than padded input");
    }
    d.ho = (hp - d.kh) / stride + 1;
    d.wo = (wp - d.kw) / stride + 1;
    return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("matmul: inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c({a.shape[0], b.shape[1]});
    if (c.size() == 0 || a.shape[1] == 0) return c;
    gemm(false, false, a.shape[0], b.shape[1], a.shape[1], a.data.data(), a.shape[1], b.data.data(), b.shape[1],
         c.data.data(), c.shape[1]);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    if (a.shape[1] != b.shape[1]) {
        throw std::invalid_argument("matmul_nt: inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c({a.shape[0], b.shape[0]});
    if (c.size() == 0 || a.shape[1] == 0) return c;
    gemm(false, true, a.shape[0], b.shape[0], a.shape[1], a.data.data(), a.shape[1], b.data.data(), b.shape[1],
         c.data.data(), c.shape[1]);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_tn");
    require_rank2(b, "matmul_tn");
    if (a.shape[0] != b.shape[0]) {
        throw std::invalid_argument("matmul_tn: inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c({a.shape[1], b.shape[1]});
    if (c.size() == 0 || a.shape[0] == 0) return c;
    gemm(true, false, a.shape[1], b.shape[1], a.shape[0], a.data.data(), a.shape[1], b.data.data(), b.shape[1],
         c.data.data(), c.shape[1]);
    return c;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
    const ConvDims d = conv_dims(x, w, stride, pad, "conv2d");
    Tensor y({d.n, d.o, d.ho, d.wo});
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t o = 0; o < d.o; ++o) {
            for (std::size_t ho = 0; ho < d.ho; ++ho) {
                for (std::size_t wo = 0; wo < d.wo; ++wo) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d.c; ++c) {
                        for (std::size_t kh = 0; kh < d.kh; ++kh) {
                            const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * stride + kh) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.h)) continue;
                            for (std::size_t kw = 0; kw < d.kw; ++kw) {
                                const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(wo * stride + kw) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.w)) continue;
                                acc += x.at(n, c, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi)) *
                                       w.at(o, c, kh, kw);
                            }
                        }
                    }
                    y.at(n, o, ho, wo) = acc;
                }
            }
        }
    }
    return y;
}

Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
    if (x.rank() != 4) throw std::invalid_argument("im2col: expected rank-4 input, got " + x.shape_str());
    Tensor probe_kernel({1, x.shape[1], kh, kw});
    const ConvDims d = conv_dims(x, probe_kernel, stride, pad, "im2col");
    const std::size_t rows = d.c * kh * kw;
    const std::size_t cols = d.n * d.ho * d.wo;
    Tensor out({rows, cols});
    for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                const std::size_t r = (c * kh + i) * kw + j;
                double* dst = out.data.data() + r * cols;
                for (std::size_t n = 0; n < d.n; ++n) {
                    for (std::size_t ho = 0; ho < d.ho; ++ho) {
                        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * stride + i) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        for (std::size_t wo = 0; wo < d.wo; ++wo) {
                            const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(wo * stride + j) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            const std::size_t col = (n * d.ho + ho) * d.wo + wo;
                            const bool inside = hi >= 0 && hi < static_cast<std::ptrdiff_t>(d.h) && wi >= 0 &&
                                                wi < static_cast<std::ptrdiff_t>(d.w);
                            dst[col] = inside ? x.at(n, c, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi))
                                              : 0.0;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor col2im(const Tensor& cols_t, std::size_t n, std::size_t c, std::size_t h, std::size_t w,
              std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
    const std::size_t hp = h + 2 * pad;
    const std::size_t wp = w + 2 * pad;
    if (hp < kh || wp < kw) throw std::invalid_argument("col2im: kernel larger than padded input");
    const std::size_t ho = (hp - kh) / stride + 1;
    const std::size_t wo = (wp - kw) / stride + 1;
    if (cols_t.rank() != 2 || cols_t.shape[0] != c * kh * kw || cols_t.shape[1] != n * ho * wo) {
        throw std::invalid_argument("col2im: column matrix shape " + cols_t.shape_str() + " inconsistent");
    }
    Tensor x({n, c, h, w});
    const std::size_t ncols = cols_t.shape[1];
    for (std::size_t cc = 0; cc < c; ++cc) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                const std::size_t r = (cc * kh + i) * kw + j;
                const double* src = cols_t.data.data() + r * ncols;
                for (std::size_t nn = 0; nn < n; ++nn) {
                    for (std::size_t hh = 0; hh < ho; ++hh) {
                        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(hh * stride + i) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t ww = 0; ww < wo; ++ww) {
                            const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(ww * stride + j) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(w)) continue;
                            x.at(nn, cc, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi)) +=
                                src[(nn * ho + hh) * wo + ww];
                        }
                    }
                }
            }
        }
    }
    return x;
}

Tensor conv2d_gemm(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
    const ConvDims d = conv_dims(x, w, stride, pad, "conv2d_gemm");
    const Tensor cols = im2col(x, d.kh, d.kw, stride, pad);
    // [O, C*kh*kw] x [C*kh*kw, N*Ho*Wo]
    Tensor wmat = w.reshaped({d.o, d.c * d.kh * d.kw});
    Tensor prod = matmul(wmat, cols);
    // Reorder [O, (n,ho,wo)] -> [N,O,Ho,Wo].
    Tensor y({d.n, d.o, d.ho, d.wo});
    const std::size_t plane = d.ho * d.wo;
    for (std::size_t o = 0; o < d.o; ++o) {
        const double* src = prod.data.data() + o * d.n * plane;
        for (std::size_t n = 0; n < d.n; ++n) {
            double* dst = y.data.data() + (n * d.o + o) * plane;
            std::copy(src + n * plane, src + (n + 1) * plane, dst);
        }
    }
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, std::size_t stride,
                          std::size_t pad) {
    const ConvDims d = conv_dims(x, w, stride, pad, "conv2d_backward");
    if (grad_out.rank() != 4 || grad_out.shape[0] != d.n || grad_out.shape[1] != d.o || grad_out.shape[2] != d.ho ||
        grad_out.shape[3] != d.wo) {
        throw std::invalid_argument("conv2d_backward: grad shape " + grad_out.shape_str() + " inconsistent");
    }
    // Reorder grad to [O, N*Ho*Wo] to match the im2col column layout.
    const std::size_t plane = d.ho * d.wo;
    Tensor g({d.o, d.n * plane});
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t o = 0; o < d.o; ++o) {
            const double* src = grad_out.data.data() + (n * d.o + o) * plane;
            std::copy(src, src + plane, g.data.data() + o * d.n * plane + n * plane);
        }
    }
    const Tensor cols = im2col(x, d.kh, d.kw, stride, pad);
    ConvGrads out;
    out.grad_weight = matmul_nt(g, cols).reshaped({d.o, d.c, d.kh, d.kw});
    Tensor wmat = w.reshaped({d.o, d.c * d.kh * d.kw});
    Tensor gcols = matmul_tn(wmat, g);  // [C*kh*kw, N*Ho*Wo]
    out.grad_input = col2im(gcols, d.n, d.c, d.h, d.w, d.kh, d.kw, stride, pad);
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x_pre, const Tensor& grad_out) {
    require_same_shape(x_pre, grad_out, "relu_backward");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (x_pre[i] <= 0.0) g[i] = 0.0;
    }
    return g;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_rank2(logits, "softmax_cross_entropy");
    const std::size_t n = logits.shape[0];
    const std::size_t c = logits.shape[1];
    if (labels.size() != n) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(n) + " rows");
    }
    if (n == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
    SoftmaxLoss out;
    out.grad = Tensor({n, c});
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= c) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) + " outside [0," +
                                        std::to_string(c) + ") at row " + std::to_string(i));
        }
        const double* row = logits.data.data() + i * c;
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
        const double log_z = std::log(z) + m;
        total += log_z - row[label];
        double* grow = out.grad.data.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) grow[j] = std::exp(row[j] - log_z) * inv_n;
        grow[label] -= inv_n;
    }
    out.loss = total * inv_n;
    return out;
}

double sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data) s += v;
    return s;
}

double mean(const Tensor& x) {
    if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
    return sum(x) / static_cast<double>(x.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return dot(a, b) / (na * nb);
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

void add_scaled(Tensor& acc, const Tensor& x, double scale) {
    require_same_shape(acc, x, "add_scaled");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * x[i];
}

std::size_t topk_keep_count(std::size_t n, double keep_fraction) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
        throw std::invalid_argument("topk: keep fraction " + std::to_string(keep_fraction) + " outside (0, 1]");
    }
    if (n == 0) throw std::invalid_argument("topk: empty input");
    const auto k = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n)));
    return std::min(std::max<std::size_t>(k, 1), n);
}

namespace {

// Strict total order: larger score first, then smaller flat index. Makes the
// kept set unique, and nested across keep fractions.
std::vector<std::size_t> topk_order(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto precede = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    if (k < idx.size()) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), precede);
    }
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<std::size_t> topk_select(std::span<const double> scores, double keep_fraction) {
    const std::size_t k = topk_keep_count(scores.size(), keep_fraction);
    std::vector<std::size_t> kept = topk_order(scores, k);
    std::sort(kept.begin(), kept.end());
    return kept;
}

double topk_threshold(std::span<const double> scores, double keep_fraction) {
    const std::size_t k = topk_keep_count(scores.size(), keep_fraction);
    std::vector<std::size_t> kept = topk_order(scores, k);
    double weakest = scores[kept[0]];
    for (std::size_t i : kept) weakest = std::min(weakest, scores[i]);
    return weakest;
}

void require_finite(const Tensor& x, const char* who) {
    for (double v : x.data) {
        if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite value encountered");
    }
}

void require_finite(double x, const char* who) {
    if (!std::isfinite(x)) throw NumericError(std::string(who) + ": non-finite value encountered");
}

}  // namespace prunekit
