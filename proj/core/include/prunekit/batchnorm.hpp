#pragma once

#include "prunekit/tensor.hpp"

namespace prunekit {

// Per-channel normalization state. The channel axis is axis 1: inputs are
// [N,C] (features) or [N,C,H,W] (maps). Variances are population variances
// (divide by the element count), both for batch statistics and for the
// running estimates, so recomputed statistics can match a two-pass
// mean/variance exactly.
struct BatchNormState {
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C]
    Tensor gamma;         // [C], learnable scale
    Tensor beta;          // [C], learnable shift
    double eps = 1e-5;
    double momentum = 0.1;

    std::size_t channels() const { return gamma.size(); }
};

BatchNormState make_batchnorm(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

struct BnCache {
    Tensor xhat;        // normalized (pre-affine) input, shape of x
    Tensor inv_std;     // [C]
    Tensor batch_mean;  // [C]
    Tensor batch_var;   // [C]
};

// Normalizes with the batch's own statistics. When update_running is set the
// running estimates take one momentum step toward the batch statistics.
Tensor batchnorm_train(const Tensor& x, BatchNormState& state, BnCache* cache, bool update_running);

// Normalizes with the stored running statistics; never mutates state.
Tensor batchnorm_eval(const Tensor& x, const BatchNormState& state);

struct BnGrads {
    Tensor grad_input;
    Tensor grad_gamma;  // [C]
    Tensor grad_beta;   // [C]
};
BnGrads batchnorm_backward(const Tensor& grad_out, const BnCache& cache, const BatchNormState& state);

// Streaming per-channel moment accumulator for statistic recalibration.
// Accumulates raw count / sum / sum-of-squares, so the finalized statistics
// equal the two-pass empirical mean and population variance of everything
// fed in, independent of batch partitioning — no momentum involved.
struct BnStatsAccumulator {
    Tensor sum;    // [C]
    Tensor sumsq;  // [C]
    double count = 0.0;

    explicit BnStatsAccumulator(std::size_t channels);
    void add(const Tensor& x);
    // Writes running_mean / running_var; requires at least one element seen.
    void finalize(BatchNormState& state) const;
};

}  // namespace prunekit
