#include "prunekit/study.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "prunekit/errors.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

constexpr std::uint64_t kInitTag = 0xB01D;
constexpr std::uint64_t kStageTag = 0x57A6E;
constexpr std::uint64_t kCalibTag = 0xCA1B;

void validate_study(const PruneStudyConfig& cfg) {
    if (cfg.capacities.empty()) throw std::invalid_argument("prune study: no target capacities");
    for (std::size_t i = 0; i < cfg.capacities.size(); ++i) {
        const double c = cfg.capacities[i];
        if (!(c > 0.0) || c > 1.0) throw std::invalid_argument("prune study: capacities must lie in (0, 1]");
        if (i > 0 && !(c < cfg.capacities[i - 1])) {
            throw std::invalid_argument("prune study: capacities must be strictly decreasing");
        }
    }
    if (cfg.seeds == 0) throw std::invalid_argument("prune study: needs at least one seed");
    if (cfg.stage_epochs < 1) throw std::invalid_argument("prune study: stage_epochs must be >= 1");
}

TrainConfig stage_config(const PruneStudyConfig& cfg, double capacity, std::uint64_t seed) {
    TrainConfig tc;
    tc.mode = TrainMode::ScoresOnly;
    tc.capacities = {capacity};
    tc.epochs = cfg.stage_epochs;
    tc.lr = cfg.lr;
    tc.weight_decay = cfg.weight_decay;
    tc.batch_size = cfg.batch_size;
    tc.seed = seed;
    tc.record_reports = false;
    return tc;
}

}  // namespace

PruneStudyResult run_prune_study(const PruneStudyConfig& cfg, const Dataset& train_data,
                                 const Dataset& test_data) {
    validate_study(cfg);
    if (train_data.size() == 0 || test_data.size() == 0) {
        throw std::invalid_argument("prune study: empty dataset");
    }
    const std::vector<std::size_t> input_shape{train_data.images.shape[1], train_data.images.shape[2],
                                              train_data.images.shape[3]};
    PruneStudyResult result;
    result.capacities = cfg.capacities;
    result.one_shot.assign(cfg.seeds, std::vector<double>(cfg.capacities.size(), 0.0));
    result.iterative.assign(cfg.seeds, std::vector<double>(cfg.capacities.size(), 0.0));

    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        Rng init_rng(derive_seed(cfg.base_seed, kInitTag, s));
        const PrunableModel init = build_model(cfg.model, input_shape, init_rng);

        const std::vector<std::size_t> calib_idx =
            calibration_indices(train_data.size(), cfg.calib_fraction, derive_seed(cfg.base_seed, kCalibTag, s));
        const Dataset calib = dataset_subset(train_data, calib_idx);

        // One-shot: each target trained directly from the shared initialization.
        for (std::size_t ci = 0; ci < cfg.capacities.size(); ++ci) {
            const double c = cfg.capacities[ci];
            PrunableModel m = init;
            train(m, train_data, stage_config(cfg, c, derive_seed(cfg.base_seed, kStageTag, s, ci)));
            const std::vector<CapacityMask> masks = build_masks(m, c);
            const std::vector<BatchNormState> stats = recalibrate_stats(m, masks, calib.images);
            result.one_shot[s][ci] = evaluate_accuracy_masked(m, masks, &stats, test_data, cfg.eval_batch);
        }

        // Iterative: descend the targets, always searching inside the
        // previous stage's surviving candidate set.
        PrunableModel m = init;
        std::vector<CapacityMask> parent;
        for (std::size_t ci = 0; ci < cfg.capacities.size(); ++ci) {
            const double c = cfg.capacities[ci];
            const TrainConfig tc = stage_config(cfg, c, derive_seed(cfg.base_seed, kStageTag, s, ci));
            train(m, train_data, tc, parent.empty() ? nullptr : &parent);
            const std::vector<CapacityMask> masks =
                parent.empty() ? build_masks(m, c) : build_masks(m, c, parent);
            const std::vector<BatchNormState> stats = recalibrate_stats(m, masks, calib.images);
            result.iterative[s][ci] = evaluate_accuracy_masked(m, masks, &stats, test_data, cfg.eval_batch);
            parent = masks;
        }
    }

    result.one_shot_mean.assign(cfg.capacities.size(), 0.0);
    result.iterative_mean.assign(cfg.capacities.size(), 0.0);
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        for (std::size_t ci = 0; ci < cfg.capacities.size(); ++ci) {
            result.one_shot_mean[ci] += result.one_shot[s][ci];
            result.iterative_mean[ci] += result.iterative[s][ci];
        }
    }
    for (std::size_t ci = 0; ci < cfg.capacities.size(); ++ci) {
        result.one_shot_mean[ci] /= static_cast<double>(cfg.seeds);
        result.iterative_mean[ci] /= static_cast<double>(cfg.seeds);
    }
    return result;
}

void write_prune_study_json(const std::string& path, const PruneStudyResult& result) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    const auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    const auto row = [&](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
        return s + "]";
    };
    const auto table = [&](const std::vector<std::vector<double>>& t) {
        std::string s = "[\n";
        for (std::size_t i = 0; i < t.size(); ++i) {
            s += "    " + row(t[i]) + (i + 1 < t.size() ? "," : "") + "\n";
        }
        return s + "  ]";
    };
    f << "{\n";
    f << "  \"capacities\": " << row(result.capacities) << ",\n";
    f << "  \"one_shot_mean\": " << row(result.one_shot_mean) << ",\n";
    f << "  \"iterative_mean\": " << row(result.iterative_mean) << ",\n";
    f << "  \"one_shot\": " << table(result.one_shot) << ",\n";
    f << "  \"iterative\": " << table(result.iterative) << "\n";
    f << "}\n";
    if (!f) throw DataError("cannot write " + path);
}

}  // namespace prunekit
