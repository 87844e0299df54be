#pragma once

#include <cstddef>

#include "prunekit/rng.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

// A weight tensor paired with a same-shape score tensor. Scores rank the
// weights within their layer; a capacity mask keeps the top-scoring fraction.
struct ScoredTensor {
    Tensor weight;
    Tensor score;
};

// Binary keep/drop decision for one layer at one capacity. bits holds 0.0 or
// 1.0 per weight, so masking is a plain elementwise product.
struct CapacityMask {
    double capacity = 1.0;
    Tensor bits;

    std::size_t popcount() const;
};

// Selects the top ceil(capacity * n) scores of the layer. Ranking precedence:
// higher score first, equal scores won by the smaller flat index — the kept
// set is unique and nested across capacities.
CapacityMask build_mask(const ScoredTensor& st, double capacity);

// Same selection restricted to the connections the parent mask kept; entries
// outside the parent can never enter. The keep count is still taken against
// the full layer size, and must not exceed the parent's popcount.
CapacityMask build_mask(const ScoredTensor& st, double capacity, const CapacityMask& parent);

// All-ones mask (capacity 1.0).
CapacityMask dense_mask(const ScoredTensor& st);

// ---- layers ---------------------------------------------------------------

struct PrunableLinear {
    ScoredTensor core;  // weight [out, in]
    Tensor bias;        // [out]

    std::size_t in_features() const { return core.weight.shape[1]; }
    std::size_t out_features() const { return core.weight.shape[0]; }
};

struct PrunableConv {
    ScoredTensor core;  // weight [O, C, kh, kw]
    Tensor bias;        // [O]
    std::size_t stride = 1;
    std::size_t pad = 0;

    std::size_t out_channels() const { return core.weight.shape[0]; }
    std::size_t in_channels() const { return core.weight.shape[1]; }
};

// Unpruned head layer (no scores).
struct DenseLinear {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
};

// Weights are He-uniform over (-sqrt(6/fan_in), +sqrt(6/fan_in)); scores are
// the absolute value of an independent draw from the same interval, so every
// connection starts strictly inside the ranking. Biases start at zero.
PrunableLinear make_prunable_linear(std::size_t in, std::size_t out, Rng& rng);
PrunableConv make_prunable_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride,
                                std::size_t pad, Rng& rng);
DenseLinear make_dense_linear(std::size_t in, std::size_t out, Rng& rng);

struct LinearCache {
    Tensor input;  // [N, in]
};
struct ConvCache {
    Tensor input;  // [N, C, H, W]
};

struct LayerGrads {
    Tensor grad_input;
    Tensor grad_weight;  // masked: exactly zero where the mask dropped
    Tensor grad_score;   // dense straight-through value, then mask-filtered
    Tensor grad_bias;
};

// y = x · (W ⊙ mask)ᵀ + b. The cache (optional) records what backward needs.
Tensor forward_masked(const PrunableLinear& l, const CapacityMask& mask, const Tensor& x, LinearCache* cache);
Tensor forward_masked(const PrunableConv& l, const CapacityMask& mask, const Tensor& x, ConvCache* cache);

// Straight-through backward: the mask is treated as an identity in the chain
// rule, then both the weight and the score gradient are multiplied by it.
// The score gradient before filtering is (upstream ∂L/∂preact) · weight ·
// input, accumulated over the batch.
LayerGrads backward_masked(const PrunableLinear& l, const CapacityMask& mask, const LinearCache& cache,
                           const Tensor& grad_out);
LayerGrads backward_masked(const PrunableConv& l, const CapacityMask& mask, const ConvCache& cache,
                           const Tensor& grad_out);

Tensor forward_dense(const DenseLinear& l, const Tensor& x, LinearCache* cache);
struct DenseGrads {
    Tensor grad_input;
    Tensor grad_weight;
    Tensor grad_bias;
};
DenseGrads backward_dense(const DenseLinear& l, const LinearCache& cache, const Tensor& grad_out);

// Mean score of each kernel: [O], averaging over (C, kh, kw).
Tensor structured_scores(const PrunableConv& l);

// Kernel-level mask: keeps the top ceil(capacity * O) kernels by mean score
// (ties to the lower kernel index); all entries of a kept kernel are kept.
CapacityMask build_structured_mask(const PrunableConv& l, double capacity);

}  // namespace prunekit
