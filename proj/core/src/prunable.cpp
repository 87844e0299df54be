#include "prunekit/prunable.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "prunekit/errors.hpp"
#include "prunekit/ops.hpp"

namespace prunekit {

namespace {

// Sets bits to 1 on the k entries ranked first by (score desc, index asc).
// Equivalent to marking topk_select's result, but selects by value threshold
// instead of ordering an index array, which is what the per-step mask
// rebuilds in training spend their time on.
void fill_topk_bits(const std::vector<double>& scores, double keep_fraction, Tensor& bits) {
    const std::size_t k = topk_keep_count(scores.size(), keep_fraction);
    std::vector<double> tmp(scores);
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k - 1), tmp.end(),
                     std::greater<double>());
    const double threshold = tmp[k - 1];
    std::size_t kept = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > threshold) {
            bits[i] = 1.0;
            ++kept;
        }
    }
    // Ties at the threshold fill the remaining slots in index order.
    for (std::size_t i = 0; i < scores.size() && kept < k; ++i) {
        if (scores[i] == threshold) {
            bits[i] = 1.0;
            ++kept;
        }
    }
    if (kept != k) throw NumericError("build_mask: scores do not admit a total order (non-finite values?)");
}

}  // namespace

std::size_t CapacityMask::popcount() const {
    std::size_t n = 0;
    for (double b : bits.data) n += b != 0.0 ? 1 : 0;
    return n;
}

CapacityMask build_mask(const ScoredTensor& st, double capacity) {
    require_same_shape(st.weight, st.score, "build_mask");
    CapacityMask m;
    m.capacity = capacity;
    m.bits = Tensor(st.score.shape);
    fill_topk_bits(st.score.data, capacity, m.bits);
    return m;
}

CapacityMask build_mask(const ScoredTensor& st, double capacity, const CapacityMask& parent) {
    require_same_shape(st.weight, st.score, "build_mask");
    require_same_shape(st.score, parent.bits, "build_mask(parent)");
    const std::size_t k = topk_keep_count(st.score.size(), capacity);
    if (k > parent.popcount()) {
        throw std::invalid_argument("build_mask: keep count " + std::to_string(k) + " exceeds parent survivors " +
                                    std::to_string(parent.popcount()));
    }
    // Scores outside the candidate set are pushed below every real score, so
    // the shared top-k precedence (score desc, index asc) never admits them.
    std::vector<double> gated = st.score.data;
    double lowest = gated[0];
    for (double v : gated) lowest = std::min(lowest, v);
    const double sentinel = lowest - 1.0;
    for (std::size_t i = 0; i < gated.size(); ++i) {
        if (parent.bits[i] == 0.0) gated[i] = sentinel;
    }
    CapacityMask m;
    m.capacity = capacity;
    m.bits = Tensor(st.score.shape);
    fill_topk_bits(gated, capacity, m.bits);
    return m;
}

CapacityMask dense_mask(const ScoredTensor& st) {
    CapacityMask m;
    m.capacity = 1.0;
    m.bits = Tensor::full(st.score.shape, 1.0);
    return m;
}

namespace {

void fill_he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

ScoredTensor make_scored(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    ScoredTensor st;
    st.weight = Tensor(shape);
    st.score = Tensor(std::move(shape));
    fill_he_uniform(st.weight, fan_in, rng);
    fill_he_uniform(st.score, fan_in, rng);
    for (auto& v : st.score.data) v = std::abs(v);
    return st;
}

}  // namespace

PrunableLinear make_prunable_linear(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0) throw std::invalid_argument("make_prunable_linear: zero dimension");
    PrunableLinear l;
    l.core = make_scored({out, in}, in, rng);
    l.bias = Tensor({out});
    return l;
}

PrunableConv make_prunable_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride,
                                std::size_t pad, Rng& rng) {
    if (in_ch == 0 || out_ch == 0 || k == 0) throw std::invalid_argument("make_prunable_conv: zero dimension");
    PrunableConv l;
    l.core = make_scored({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    l.bias = Tensor({out_ch});
    l.stride = stride;
    l.pad = pad;
    return l;
}

DenseLinear make_dense_linear(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0) throw std::invalid_argument("make_dense_linear: zero dimension");
    DenseLinear l;
    l.weight = Tensor({out, in});
    fill_he_uniform(l.weight, in, rng);
    l.bias = Tensor({out});
    return l;
}

Tensor forward_masked(const PrunableLinear& l, const CapacityMask& mask, const Tensor& x, LinearCache* cache) {
    require_same_shape(l.core.weight, mask.bits, "forward_masked(linear)");
    if (x.rank() != 2 || x.shape[1] != l.in_features()) {
        throw std::invalid_argument("forward_masked(linear): input " + x.shape_str() + " incompatible with weight " +
                                    l.core.weight.shape_str());
    }
    const Tensor w = hadamard(l.core.weight, mask.bits);
    Tensor y = matmul_nt(x, w);
    for (std::size_t n = 0; n < y.shape[0]; ++n) {
        for (std::size_t o = 0; o < y.shape[1]; ++o) y.at(n, o) += l.bias[o];
    }
    if (cache) cache->input = x;
    return y;
}

Tensor forward_masked(const PrunableConv& l, const CapacityMask& mask, const Tensor& x, ConvCache* cache) {
    require_same_shape(l.core.weight, mask.bits, "forward_masked(conv)");
    const Tensor w = hadamard(l.core.weight, mask.bits);
    Tensor y = conv2d_gemm(x, w, l.stride, l.pad);
    const std::size_t plane = y.shape[2] * y.shape[3];
    for (std::size_t n = 0; n < y.shape[0]; ++n) {
        for (std::size_t o = 0; o < y.shape[1]; ++o) {
            double* p = y.data.data() + (n * y.shape[1] + o) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += l.bias[o];
        }
    }
    if (cache) cache->input = x;
    return y;
}

LayerGrads backward_masked(const PrunableLinear& l, const CapacityMask& mask, const LinearCache& cache,
                           const Tensor& grad_out) {
    require_same_shape(l.core.weight, mask.bits, "backward_masked(linear)");
    if (grad_out.rank() != 2 || grad_out.shape[1] != l.out_features() || cache.input.rank() != 2 ||
        grad_out.shape[0] != cache.input.shape[0]) {
        throw std::invalid_argument("backward_masked(linear): grad " + grad_out.shape_str() +
                                    " inconsistent with cached input " + cache.input.shape_str());
    }
    LayerGrads g;
    // Dense straight-through gradient w.r.t. the pre-mask weight.
    const Tensor dense = matmul_tn(grad_out, cache.input);  // [out, in]
    g.grad_weight = hadamard(dense, mask.bits);
    g.grad_score = hadamard(hadamard(dense, l.core.weight), mask.bits);
    const Tensor w = hadamard(l.core.weight, mask.bits);
    g.grad_input = matmul(grad_out, w);
    g.grad_bias = Tensor({l.out_features()});
    for (std::size_t n = 0; n < grad_out.shape[0]; ++n) {
        for (std::size_t o = 0; o < grad_out.shape[1]; ++o) g.grad_bias[o] += grad_out.at(n, o);
    }
    return g;
}

LayerGrads backward_masked(const PrunableConv& l, const CapacityMask& mask, const ConvCache& cache,
                           const Tensor& grad_out) {
    require_same_shape(l.core.weight, mask.bits, "backward_masked(conv)");
    LayerGrads g;
    const Tensor w = hadamard(l.core.weight, mask.bits);
    ConvGrads cg = conv2d_backward(cache.input, w, grad_out, l.stride, l.pad);
    // The weight gradient of the convolution does not involve the weight
    // values themselves, so it doubles as the dense straight-through value.
    g.grad_weight = hadamard(cg.grad_weight, mask.bits);
    g.grad_score = hadamard(hadamard(cg.grad_weight, l.core.weight), mask.bits);
    g.grad_input = std::move(cg.grad_input);
    g.grad_bias = Tensor({l.out_channels()});
    const std::size_t plane = grad_out.shape[2] * grad_out.shape[3];
    for (std::size_t n = 0; n < grad_out.shape[0]; ++n) {
        for (std::size_t o = 0; o < grad_out.shape[1]; ++o) {
            const double* p = grad_out.data.data() + (n * grad_out.shape[1] + o) * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            g.grad_bias[o] += s;
        }
    }
    return g;
}

Tensor forward_dense(const DenseLinear& l, const Tensor& x, LinearCache* cache) {
    if (x.rank() != 2 || x.shape[1] != l.weight.shape[1]) {
        throw std::invalid_argument("forward_dense: input " + x.shape_str() + " incompatible with weight " +
                                    l.weight.shape_str());
    }
    Tensor y = matmul_nt(x, l.weight);
    for (std::size_t n = 0; n < y.shape[0]; ++n) {
        for (std::size_t o = 0; o < y.shape[1]; ++o) y.at(n, o) += l.bias[o];
    }
    if (cache) cache->input = x;
    return y;
}

DenseGrads backward_dense(const DenseLinear& l, const LinearCache& cache, const Tensor& grad_out) {
    DenseGrads g;
    g.grad_weight = matmul_tn(grad_out, cache.input);
    g.grad_input = matmul(grad_out, l.weight);
    g.grad_bias = Tensor({l.weight.shape[0]});
    for (std::size_t n = 0; n < grad_out.shape[0]; ++n) {
        for (std::size_t o = 0; o < grad_out.shape[1]; ++o) g.grad_bias[o] += grad_out.at(n, o);
    }
    return g;
}

Tensor structured_scores(const PrunableConv& l) {
    const Tensor& s = l.core.score;
    const std::size_t o = s.shape[0];
    const std::size_t per = s.shape[1] * s.shape[2] * s.shape[3];
    Tensor out({o});
    for (std::size_t i = 0; i < o; ++i) {
        double acc = 0.0;
        const double* p = s.data.data() + i * per;
        for (std::size_t j = 0; j < per; ++j) acc += p[j];
        out[i] = acc / static_cast<double>(per);
    }
    return out;
}

CapacityMask build_structured_mask(const PrunableConv& l, double capacity) {
    const Tensor ks = structured_scores(l);
    const std::vector<std::size_t> kept = topk_select(ks.data, capacity);
    CapacityMask m;
    m.capacity = capacity;
    m.bits = Tensor(l.core.weight.shape);
    const std::size_t per = l.core.weight.size() / l.core.weight.shape[0];
    for (std::size_t o : kept) {
        double* p = m.bits.data.data() + o * per;
        for (std::size_t j = 0; j < per; ++j) p[j] = 1.0;
    }
    return m;
}

}  // namespace prunekit
