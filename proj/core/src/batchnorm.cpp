#include "prunekit/batchnorm.hpp"

#include <cmath>
#include <stdexcept>

namespace prunekit {

namespace {

struct BnLayout {
    std::size_t n, c, s;  // batch, channels, spatial elements per channel
};

BnLayout bn_layout(const Tensor& x, std::size_t channels, const char* who) {
    if (x.rank() != 2 && x.rank() != 4) {
        throw std::invalid_argument(std::string(who) + ": expected [N,C] or [N,C,H,W], got " + x.shape_str());
    }
    if (x.shape[1] != channels) {
        throw std::invalid_argument(std::string(who) + ": input has " + std::to_string(x.shape[1]) +
                                    " channels, state has " + std::to_string(channels));
    }
    if (x.shape[0] == 0) throw std::invalid_argument(std::string(who) + ": empty batch");
    BnLayout l{x.shape[0], x.shape[1], 1};
    if (x.rank() == 4) l.s = x.shape[2] * x.shape[3];
    return l;
}

}  // namespace

BatchNormState make_batchnorm(std::size_t channels, double eps, double momentum) {
    BatchNormState st;
    st.running_mean = Tensor({channels});
    st.running_var = Tensor::full({channels}, 1.0);
    st.gamma = Tensor::full({channels}, 1.0);
    st.beta = Tensor({channels});
    st.eps = eps;
    st.momentum = momentum;
    return st;
}

Tensor batchnorm_train(const Tensor& x, BatchNormState& state, BnCache* cache, bool update_running) {
    const BnLayout l = bn_layout(x, state.channels(), "batchnorm_train");
    const double m = static_cast<double>(l.n * l.s);
    Tensor mean({l.c}), var({l.c}), inv_std({l.c});
    for (std::size_t c = 0; c < l.c; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < l.n; ++n) {
            const double* p = x.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) s += p[i];
        }
        mean[c] = s / m;
        double sq = 0.0;
        for (std::size_t n = 0; n < l.n; ++n) {
            const double* p = x.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) {
                const double d = p[i] - mean[c];
                sq += d * d;
            }
        }
        var[c] = sq / m;
        inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);
    }
    Tensor y(x.shape);
    Tensor xhat(x.shape);
    for (std::size_t n = 0; n < l.n; ++n) {
        for (std::size_t c = 0; c < l.c; ++c) {
            const double* p = x.data.data() + (n * l.c + c) * l.s;
            double* ph = xhat.data.data() + (n * l.c + c) * l.s;
            double* py = y.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) {
                ph[i] = (p[i] - mean[c]) * inv_std[c];
                py[i] = state.gamma[c] * ph[i] + state.beta[c];
            }
        }
    }
    if (update_running) {
        for (std::size_t c = 0; c < l.c; ++c) {
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->batch_mean = std::move(mean);
        cache->batch_var = std::move(var);
    }
    return y;
}

Tensor batchnorm_eval(const Tensor& x, const BatchNormState& state) {
    const BnLayout l = bn_layout(x, state.channels(), "batchnorm_eval");
    Tensor y(x.shape);
    for (std::size_t c = 0; c < l.c; ++c) {
        const double inv_std = 1.0 / std::sqrt(state.running_var[c] + state.eps);
        const double scale = state.gamma[c] * inv_std;
        const double shift = state.beta[c] - state.running_mean[c] * scale;
        for (std::size_t n = 0; n < l.n; ++n) {
            const double* p = x.data.data() + (n * l.c + c) * l.s;
            double* py = y.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) py[i] = p[i] * scale + shift;
        }
    }
    return y;
}

BnGrads batchnorm_backward(const Tensor& grad_out, const BnCache& cache, const BatchNormState& state) {
    require_same_shape(grad_out, cache.xhat, "batchnorm_backward");
    const BnLayout l = bn_layout(grad_out, state.channels(), "batchnorm_backward");
    const double m = static_cast<double>(l.n * l.s);
    BnGrads g;
    g.grad_gamma = Tensor({l.c});
    g.grad_beta = Tensor({l.c});
    g.grad_input = Tensor(grad_out.shape);
    for (std::size_t c = 0; c < l.c; ++c) {
        // Channel-wise sums of dL/dxhat and dL/dxhat * xhat.
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0, sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < l.n; ++n) {
            const double* pg = grad_out.data.data() + (n * l.c + c) * l.s;
            const double* ph = cache.xhat.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) {
                sum_dy += pg[i];
                sum_dy_xhat += pg[i] * ph[i];
            }
        }
        g.grad_beta[c] = sum_dy;
        g.grad_gamma[c] = sum_dy_xhat;
        sum_dxhat = state.gamma[c] * sum_dy;
        sum_dxhat_xhat = state.gamma[c] * sum_dy_xhat;
        const double k = cache.inv_std[c] / m;
        for (std::size_t n = 0; n < l.n; ++n) {
            const double* pg = grad_out.data.data() + (n * l.c + c) * l.s;
            const double* ph = cache.xhat.data.data() + (n * l.c + c) * l.s;
            double* px = g.grad_input.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) {
                const double dxhat = state.gamma[c] * pg[i];
                px[i] = k * (m * dxhat - sum_dxhat - ph[i] * sum_dxhat_xhat);
            }
        }
    }
    return g;
}

BnStatsAccumulator::BnStatsAccumulator(std::size_t channels) : sum(Tensor({channels})), sumsq(Tensor({channels})) {}

void BnStatsAccumulator::add(const Tensor& x) {
    const BnLayout l = bn_layout(x, sum.size(), "BnStatsAccumulator::add");
    for (std::size_t c = 0; c < l.c; ++c) {
        double s = 0.0, sq = 0.0;
        for (std::size_t n = 0; n < l.n; ++n) {
            const double* p = x.data.data() + (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) {
                s += p[i];
                sq += p[i] * p[i];
            }
        }
        sum[c] += s;
        sumsq[c] += sq;
    }
    count += static_cast<double>(l.n * l.s);
}

void BnStatsAccumulator::finalize(BatchNormState& state) const {
    if (count <= 0.0) throw std::invalid_argument("BnStatsAccumulator::finalize: no data accumulated");
    if (state.channels() != sum.size()) {
        throw std::invalid_argument("BnStatsAccumulator::finalize: channel count mismatch");
    }
    for (std::size_t c = 0; c < sum.size(); ++c) {
        const double mean = sum[c] / count;
        // Population variance; clamped at zero against rounding on
        // near-constant channels.
        const double var = sumsq[c] / count - mean * mean;
        state.running_mean[c] = mean;
        state.running_var[c] = var > 0.0 ? var : 0.0;
    }
}

}  // namespace prunekit
