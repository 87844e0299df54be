#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prunekit/batchnorm.hpp"
#include "prunekit/prunable.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

enum class LayerKind { Linear, Conv };

// One backbone stage: a prunable layer, optionally followed by per-channel
// normalization (shared across every capacity — only its running statistics
// get per-capacity snapshots elsewhere) and ReLU.
struct BackboneBlock {
    LayerKind kind = LayerKind::Linear;
    PrunableLinear linear;  // when kind == Linear
    PrunableConv conv;      // when kind == Conv
    bool has_norm = true;
    BatchNormState norm;    // learnable affine + capacity-1.0 running stats
    bool relu = true;

    const ScoredTensor& scored() const { return kind == LayerKind::Linear ? linear.core : conv.core; }
    ScoredTensor& scored() { return kind == LayerKind::Linear ? linear.core : conv.core; }
    std::size_t out_channels() const {
        return kind == LayerKind::Linear ? linear.out_features() : conv.out_channels();
    }
};

// Prunable backbone with an unpruned embedding head and an unpruned
// classifier shared by the dense network and every subnetwork.
struct PrunableModel {
    std::vector<std::size_t> input_shape;  // {C,H,W}; vector data uses {D,1,1}
    std::vector<BackboneBlock> blocks;
    DenseLinear embedding_head;  // flattened backbone output -> embed_dim
    DenseLinear classifier;      // embed_dim -> classes
    // Per-capacity normalization snapshots produced by recalibration, keyed
    // by capacity. The affine parameters inside are copies of the shared
    // ones; only the running statistics differ.
    std::map<double, std::vector<BatchNormState>> bn_stats;

    std::size_t embed_dim() const { return embedding_head.weight.shape[0]; }
    std::size_t classes() const { return classifier.weight.shape[0]; }
};

struct ModelConfig {
    enum class Arch { Mlp, Conv };
    Arch arch = Arch::Mlp;
    std::vector<std::size_t> hidden{256, 128};  // MLP hidden widths
    std::vector<std::size_t> channels{8, 16};   // conv channels per stage
    std::size_t kernel = 3;
    std::size_t stride = 2;
    std::size_t pad = 1;
    std::size_t embed_dim = 64;
    std::size_t classes = 10;
    bool norm = true;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

PrunableModel build_model(const ModelConfig& cfg, const std::vector<std::size_t>& input_shape, Rng& rng);

// One mask per backbone block, in block order. capacity 1.0 gives all-ones.
std::vector<CapacityMask> build_masks(const PrunableModel& model, double capacity);
// Capacity selection restricted to parent survivors, blockwise.
std::vector<CapacityMask> build_masks(const PrunableModel& model, double capacity,
                                      const std::vector<CapacityMask>& parents);

// Recalibrated statistics for a capacity, or nullptr if none are stored.
// Capacities are matched within 1e-12.
const std::vector<BatchNormState>* find_bn_stats(const PrunableModel& model, double capacity);

enum class StatMode {
    Batch,               // normalize with batch statistics (subnetwork pass)
    BatchUpdateRunning,  // batch statistics + momentum update (dense pass)
    Running,             // stored statistics (evaluation)
};

struct BlockTrace {
    LinearCache lcache;
    ConvCache ccache;
    Tensor preact;  // layer output, pre-normalization
    BnCache bn;
    Tensor normed;  // ReLU input
};

struct ForwardTrace {
    std::vector<BlockTrace> blocks;
    Tensor flat;  // flattened backbone output [N, F]
    LinearCache embed_cache;
    Tensor embed;  // [N, embed_dim]
    LinearCache cls_cache;
    Tensor logits;  // [N, classes]
};

// Full forward pass; returns logits. masks must have one entry per block.
// stat_override (Running mode only) substitutes per-capacity normalization
// statistics; otherwise each block's own state is used. The model is only
// mutated in BatchUpdateRunning mode.
Tensor model_forward(PrunableModel& model, const std::vector<CapacityMask>& masks, const Tensor& images,
                     StatMode stat_mode, const std::vector<BatchNormState>* stat_override, ForwardTrace* trace);

struct ModelGrads {
    std::vector<LayerGrads> layers;  // per block
    std::vector<Tensor> bn_gamma;    // per block; empty tensor when no norm
    std::vector<Tensor> bn_beta;
    DenseGrads embed;
    DenseGrads cls;
};

// Backward through the trace of a Batch-mode forward.
ModelGrads model_backward(const PrunableModel& model, const std::vector<CapacityMask>& masks,
                          const ForwardTrace& trace, const Tensor& grad_logits);

struct EvalOutput {
    Tensor logits;
    Tensor embeddings;
    bool dense_stats_fallback = false;  // no stats stored for the capacity
};

// Inference under explicit masks and (optional) explicit normalization
// statistics. Never mutates the model. Callers that restricted masks to a
// parent candidate set evaluate through this.
EvalOutput model_eval_masked(const PrunableModel& model, const std::vector<CapacityMask>& masks,
                             const std::vector<BatchNormState>* stats, const Tensor& images);

// Inference at a capacity: masks from current scores, running statistics from
// the capacity's snapshot when one exists (the shared dense ones otherwise,
// flagged in the result). Never mutates the model.
EvalOutput model_eval(const PrunableModel& model, double capacity, const Tensor& images);

// Fraction of argmax-correct predictions, evaluated in slices of eval_batch.
double evaluate_accuracy(const PrunableModel& model, double capacity, const struct Dataset& data,
                         std::size_t eval_batch = 256);
double evaluate_accuracy_masked(const PrunableModel& model, const std::vector<CapacityMask>& masks,
                                const std::vector<BatchNormState>* stats, const struct Dataset& data,
                                std::size_t eval_batch = 256);

}  // namespace prunekit
