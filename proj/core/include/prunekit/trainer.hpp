#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/datasets.hpp"
#include "prunekit/integrate.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// What moves during training.
//   Compatible:   weights, scores, biases, norm affine, heads — the full
//                 multi-capacity objective (dense pass + one pass per capacity).
//   ScoresOnly:   scores move, everything else is frozen; exactly one capacity
//                 and no dense pass (subnetwork search inside fixed weights).
//   FrozenScores: scores are pinned, everything else trains (fixed candidate
//                 sets, weights keep adapting).
enum class TrainMode { Compatible, ScoresOnly, FrozenScores };

struct TrainConfig {
    std::vector<double> capacities{0.8, 0.6, 0.4, 0.2};  // strictly decreasing, in (0,1]
    TrainMode mode = TrainMode::Compatible;

    // Gradient integration.
    double alpha = 0.5;
    IntegrationRule rule = IntegrationRule::WeightedOriginals;
    double gamma_floor = 1e-12;

    // Optimizer.
    double lr = 0.05;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::vector<std::int64_t> lr_milestones;  // epoch indices where lr *= lr_gamma
    double lr_gamma = 0.1;

    std::int64_t epochs = 1;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;

    std::string conflict_log;     // JSONL path; empty disables
    bool record_reports = true;   // keep per-step reports in TrainStats
};

// Throws std::invalid_argument on contradictory settings.
void validate_train_config(const TrainConfig& cfg);

struct StepReport {
    std::size_t step = 0;
    std::vector<double> losses;                   // aligned with TrainStats::loss_names
    std::vector<int> conflicts;                   // per bundle block
    std::vector<std::vector<double>> grad_norms;  // [loss][bundle block]
};

struct TrainStats {
    std::vector<std::string> loss_names;   // "dense" first unless scores-only, then "c<capacity>"
    std::vector<std::string> block_names;  // bundle blocks in integration order
    std::vector<StepReport> reports;       // empty unless cfg.record_reports
    std::size_t steps = 0;
    double final_lr = 0.0;
};

// One parameter group that the conflict-aware integration treats as a unit:
// a conv kernel, a whole linear layer, a bias vector, a normalization affine
// vector, or a head tensor. Weights and scores form separate groups of equal
// granularity.
struct BundleBlockDesc {
    enum class Kind { Weight, Score, Bias, NormGamma, NormBeta, EmbedWeight, EmbedBias, ClsWeight, ClsBias };
    Kind kind = Kind::Weight;
    std::size_t block = 0;   // backbone block index; unused for head kinds
    std::size_t kernel = 0;  // conv kernel index; kNoKernel for whole tensors
    std::string name;

    static constexpr std::size_t kNoKernel = static_cast<std::size_t>(-1);
};

std::vector<BundleBlockDesc> bundle_layout(const PrunableModel& model);

// Flattens one ModelGrads per loss into the bundle layout above.
GradientBundle gather_bundle(const PrunableModel& model, const std::vector<ModelGrads>& per_loss);

// Seed derivations used by the training loop, exposed so a run can be
// replayed piece by piece.
std::uint64_t train_epoch_order_seed(const TrainConfig& cfg, std::int64_t epoch);
std::uint64_t train_step_shuffle_seed(const TrainConfig& cfg, std::size_t step);

// Multi-capacity training. Masks are rebuilt from the current scores every
// step; when parent_masks is given, every rebuilt mask is restricted to it.
// Throws NumericError when a loss or update stops being finite.
TrainStats train(PrunableModel& model, const Dataset& data, const TrainConfig& cfg,
                 const std::vector<CapacityMask>* parent_masks = nullptr);

// First ceil(fraction * n) entries of a seeded permutation of [0, n).
std::vector<std::size_t> calibration_indices(std::size_t n, double fraction, std::uint64_t seed);

// Fresh normalization statistics for one masked subnetwork, computed layer by
// layer over the calibration images: block b sees inputs normalized by the
// fresh statistics of the blocks before it, and its own statistics are the
// exact empirical moments of its pre-activations over the whole calibration
// set (batch-partition independent). Affine parameters are copied unchanged.
std::vector<BatchNormState> recalibrate_stats(const PrunableModel& model,
                                              const std::vector<CapacityMask>& masks,
                                              const Tensor& calib_images);

// Stores a per-capacity snapshot, replacing any existing one within 1e-12.
void store_bn_stats(PrunableModel& model, double capacity, std::vector<BatchNormState> stats);

// Recalibrates every listed capacity on a seeded calibration subset and
// stores the snapshots in model.bn_stats. Model parameters are untouched.
void adaptive_bn_recalibrate(PrunableModel& model, const Dataset& data,
                             const std::vector<double>& capacities,
                             double calib_fraction = 1.0 / 30.0, std::uint64_t seed = 1);

}  // namespace prunekit
