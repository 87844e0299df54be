#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/datasets.hpp"
#include "prunekit/model.hpp"
#include "prunekit/trainer.hpp"

namespace prunekit {

// Comparison of one-shot and iterative capacity reduction under score-only
// training with frozen, randomly initialized weights. Both arms share the
// same initialization per seed; the first stage of the iterative descent is
// bit-identical to the one-shot run at the largest target.
struct PruneStudyConfig {
    ModelConfig model;
    std::vector<double> capacities{0.5, 0.4, 0.3, 0.2, 0.1};  // strictly decreasing targets
    std::int64_t stage_epochs = 2;
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
    double lr = 0.1;
    double weight_decay = 0.0;
    std::size_t batch_size = 64;
    double calib_fraction = 1.0 / 30.0;
    std::size_t eval_batch = 256;
};

struct PruneStudyResult {
    std::vector<double> capacities;
    std::vector<std::vector<double>> one_shot;   // [seed][capacity] accuracy in [0,1]
    std::vector<std::vector<double>> iterative;  // [seed][capacity]
    std::vector<double> one_shot_mean;
    std::vector<double> iterative_mean;
};

PruneStudyResult run_prune_study(const PruneStudyConfig& cfg, const Dataset& train_data,
                                 const Dataset& test_data);

void write_prune_study_json(const std::string& path, const PruneStudyResult& result);

}  // namespace prunekit
