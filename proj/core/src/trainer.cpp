#include "prunekit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "prunekit/errors.hpp"
#include "prunekit/ops.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

constexpr std::uint64_t kEpochTag = 0x45504f43;    // batch-order streams
constexpr std::uint64_t kShuffleTag = 0x53485546;  // integration shuffle streams

std::string capacity_loss_name(double c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%g", c);
    return buf;
}

bool kind_trainable(BundleBlockDesc::Kind k, TrainMode mode) {
    const bool is_score = k == BundleBlockDesc::Kind::Score;
    switch (mode) {
        case TrainMode::Compatible: return true;
        case TrainMode::ScoresOnly: return is_score;
        case TrainMode::FrozenScores: return !is_score;
    }
    return false;
}

struct Span {
    double* p = nullptr;
    std::size_t n = 0;
};

Span slice_of(Tensor& t, std::size_t kernel) {
    if (kernel == BundleBlockDesc::kNoKernel) return {t.data.data(), t.data.size()};
    const std::size_t per = t.data.size() / t.shape[0];
    return {t.data.data() + kernel * per, per};
}

Span param_span(PrunableModel& m, const BundleBlockDesc& d) {
    using Kind = BundleBlockDesc::Kind;
    switch (d.kind) {
        case Kind::Weight: return slice_of(m.blocks[d.block].scored().weight, d.kernel);
        case Kind::Score: return slice_of(m.blocks[d.block].scored().score, d.kernel);
        case Kind::Bias: {
            BackboneBlock& b = m.blocks[d.block];
            Tensor& t = b.kind == LayerKind::Linear ? b.linear.bias : b.conv.bias;
            return {t.data.data(), t.data.size()};
        }
        case Kind::NormGamma: return {m.blocks[d.block].norm.gamma.data.data(), m.blocks[d.block].norm.gamma.size()};
        case Kind::NormBeta: return {m.blocks[d.block].norm.beta.data.data(), m.blocks[d.block].norm.beta.size()};
        case Kind::EmbedWeight: return {m.embedding_head.weight.data.data(), m.embedding_head.weight.size()};
        case Kind::EmbedBias: return {m.embedding_head.bias.data.data(), m.embedding_head.bias.size()};
        case Kind::ClsWeight: return {m.classifier.weight.data.data(), m.classifier.weight.size()};
        case Kind::ClsBias: return {m.classifier.bias.data.data(), m.classifier.bias.size()};
    }
    return {};
}

struct ConstSpan {
    const double* p = nullptr;
    std::size_t n = 0;
};

ConstSpan const_slice_of(const Tensor& t, std::size_t kernel) {
    if (kernel == BundleBlockDesc::kNoKernel) return {t.data.data(), t.data.size()};
    const std::size_t per = t.data.size() / t.shape[0];
    return {t.data.data() + kernel * per, per};
}

ConstSpan grad_span(const ModelGrads& g, const BundleBlockDesc& d) {
    using Kind = BundleBlockDesc::Kind;
    switch (d.kind) {
        case Kind::Weight: return const_slice_of(g.layers[d.block].grad_weight, d.kernel);
        case Kind::Score: return const_slice_of(g.layers[d.block].grad_score, d.kernel);
        case Kind::Bias: return {g.layers[d.block].grad_bias.data.data(), g.layers[d.block].grad_bias.size()};
        case Kind::NormGamma: return {g.bn_gamma[d.block].data.data(), g.bn_gamma[d.block].size()};
        case Kind::NormBeta: return {g.bn_beta[d.block].data.data(), g.bn_beta[d.block].size()};
        case Kind::EmbedWeight: return {g.embed.grad_weight.data.data(), g.embed.grad_weight.size()};
        case Kind::EmbedBias: return {g.embed.grad_bias.data.data(), g.embed.grad_bias.size()};
        case Kind::ClsWeight: return {g.cls.grad_weight.data.data(), g.cls.grad_weight.size()};
        case Kind::ClsBias: return {g.cls.grad_bias.data.data(), g.cls.grad_bias.size()};
    }
    return {};
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
    for (std::size_t i = 0; i < cfg.capacities.size(); ++i) {
        const double c = cfg.capacities[i];
        if (!(c > 0.0) || c > 1.0) throw std::invalid_argument("train: capacities must lie in (0, 1]");
        if (i > 0 && !(c < cfg.capacities[i - 1])) {
            throw std::invalid_argument("train: capacities must be strictly decreasing");
        }
    }
    if (cfg.mode == TrainMode::ScoresOnly && cfg.capacities.size() != 1) {
        throw std::invalid_argument("train: scores-only mode uses exactly one capacity");
    }
    if (cfg.alpha < 0.0) throw std::invalid_argument("train: alpha must be >= 0");
    if (!(cfg.gamma_floor >= 0.0)) throw std::invalid_argument("train: gamma_floor must be >= 0");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw std::invalid_argument("train: momentum must lie in [0, 1)");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (!(cfg.lr_gamma > 0.0)) throw std::invalid_argument("train: lr_gamma must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    for (std::size_t i = 0; i < cfg.lr_milestones.size(); ++i) {
        if (cfg.lr_milestones[i] < 0) throw std::invalid_argument("train: lr milestones must be >= 0");
        if (i > 0 && cfg.lr_milestones[i] <= cfg.lr_milestones[i - 1]) {
            throw std::invalid_argument("train: lr milestones must be strictly increasing");
        }
    }
}

std::vector<BundleBlockDesc> bundle_layout(const PrunableModel& model) {
    std::vector<BundleBlockDesc> out;
    auto push = [&out](BundleBlockDesc::Kind kind, std::size_t block, std::size_t kernel, std::string name) {
        out.push_back({kind, block, kernel, std::move(name)});
    };
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const BackboneBlock& b = model.blocks[i];
        const std::string base = "block" + std::to_string(i);
        if (b.kind == LayerKind::Conv) {
            const std::size_t kernels = b.conv.out_channels();
            for (std::size_t o = 0; o < kernels; ++o) {
                push(BundleBlockDesc::Kind::Weight, i, o, base + ".weight.k" + std::to_string(o));
            }
            for (std::size_t o = 0; o < kernels; ++o) {
                push(BundleBlockDesc::Kind::Score, i, o, base + ".score.k" + std::to_string(o));
            }
        } else {
            push(BundleBlockDesc::Kind::Weight, i, BundleBlockDesc::kNoKernel, base + ".weight");
            push(BundleBlockDesc::Kind::Score, i, BundleBlockDesc::kNoKernel, base + ".score");
        }
        push(BundleBlockDesc::Kind::Bias, i, BundleBlockDesc::kNoKernel, base + ".bias");
        if (b.has_norm) {
            push(BundleBlockDesc::Kind::NormGamma, i, BundleBlockDesc::kNoKernel, base + ".norm.gamma");
            push(BundleBlockDesc::Kind::NormBeta, i, BundleBlockDesc::kNoKernel, base + ".norm.beta");
        }
    }
    push(BundleBlockDesc::Kind::EmbedWeight, 0, BundleBlockDesc::kNoKernel, "embed.weight");
    push(BundleBlockDesc::Kind::EmbedBias, 0, BundleBlockDesc::kNoKernel, "embed.bias");
    push(BundleBlockDesc::Kind::ClsWeight, 0, BundleBlockDesc::kNoKernel, "classifier.weight");
    push(BundleBlockDesc::Kind::ClsBias, 0, BundleBlockDesc::kNoKernel, "classifier.bias");
    return out;
}

GradientBundle gather_bundle(const PrunableModel& model, const std::vector<ModelGrads>& per_loss) {
    const std::vector<BundleBlockDesc> layout = bundle_layout(model);
    GradientBundle bundle;
    bundle.block_names.reserve(layout.size());
    for (const BundleBlockDesc& d : layout) bundle.block_names.push_back(d.name);
    bundle.grads.resize(per_loss.size());
    for (std::size_t li = 0; li < per_loss.size(); ++li) {
        bundle.grads[li].reserve(layout.size());
        for (const BundleBlockDesc& d : layout) {
            const ConstSpan s = grad_span(per_loss[li], d);
            bundle.grads[li].emplace_back(s.p, s.p + s.n);
        }
    }
    return bundle;
}

std::uint64_t train_epoch_order_seed(const TrainConfig& cfg, std::int64_t epoch) {
    return derive_seed(cfg.seed, kEpochTag, static_cast<std::uint64_t>(epoch));
}

std::uint64_t train_step_shuffle_seed(const TrainConfig& cfg, std::size_t step) {
    return derive_seed(cfg.seed, kShuffleTag, static_cast<std::uint64_t>(step));
}

TrainStats train(PrunableModel& model, const Dataset& data, const TrainConfig& cfg,
                 const std::vector<CapacityMask>* parent_masks) {
    validate_train_config(cfg);
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (parent_masks && parent_masks->size() != model.blocks.size()) {
        throw std::invalid_argument("train: parent mask count does not match model");
    }

    TrainStats stats;
    const bool dense_pass = cfg.mode != TrainMode::ScoresOnly;
    if (dense_pass) stats.loss_names.push_back("dense");
    for (double c : cfg.capacities) stats.loss_names.push_back(capacity_loss_name(c));

    const std::vector<BundleBlockDesc> layout = bundle_layout(model);
    stats.block_names.reserve(layout.size());
    for (const BundleBlockDesc& d : layout) stats.block_names.push_back(d.name);

    std::ofstream conflict_log;
    if (!cfg.conflict_log.empty()) {
        conflict_log.open(cfg.conflict_log, std::ios::trunc);
        if (!conflict_log) throw DataError("train: cannot open conflict log " + cfg.conflict_log);
    }

    std::vector<std::vector<double>> velocity(layout.size());
    for (std::size_t k = 0; k < layout.size(); ++k) {
        velocity[k].assign(param_span(model, layout[k]).n, 0.0);
    }

    const std::vector<CapacityMask> dense_masks = build_masks(model, 1.0);
    stats.final_lr = cfg.lr;
    std::size_t step = 0;

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        for (std::int64_t m : cfg.lr_milestones) {
            if (m <= epoch) lr *= cfg.lr_gamma;
        }
        stats.final_lr = lr;

        BatchIterator batches(data, cfg.batch_size, train_epoch_order_seed(cfg, epoch), true);
        Batch batch;
        while (batches.next(batch)) {
            // Candidate sets come from the current scores, every step.
            std::vector<std::vector<CapacityMask>> capacity_masks;
            capacity_masks.reserve(cfg.capacities.size());
            for (double c : cfg.capacities) {
                capacity_masks.push_back(parent_masks ? build_masks(model, c, *parent_masks)
                                                      : build_masks(model, c));
            }

            std::vector<ModelGrads> per_loss;
            std::vector<double> losses;
            auto run_pass = [&](const std::vector<CapacityMask>& masks, StatMode mode) {
                ForwardTrace trace;
                const Tensor logits = model_forward(model, masks, batch.images, mode, nullptr, &trace);
                const SoftmaxLoss sl = softmax_cross_entropy(logits, batch.labels);
                const std::string who =
                    "train step " + std::to_string(step) + " loss " + stats.loss_names[losses.size()];
                require_finite(sl.loss, who.c_str());
                losses.push_back(sl.loss);
                per_loss.push_back(model_backward(model, masks, trace, sl.grad));
            };
            if (dense_pass) run_pass(dense_masks, StatMode::BatchUpdateRunning);
            for (const auto& masks : capacity_masks) run_pass(masks, StatMode::Batch);

            const GradientBundle bundle = gather_bundle(model, per_loss);
            IntegrationConfig icfg;
            icfg.alpha = cfg.alpha;
            icfg.rule = cfg.rule;
            icfg.shuffle_seed = train_step_shuffle_seed(cfg, step);
            icfg.gamma_floor = cfg.gamma_floor;
            const IntegrationResult ir = integrate_bundle(bundle, icfg);

            for (std::size_t k = 0; k < layout.size(); ++k) {
                if (!kind_trainable(layout[k].kind, cfg.mode)) continue;
                const Span p = param_span(model, layout[k]);
                const Grad& g = ir.integrated[k];
                std::vector<double>& v = velocity[k];
                for (std::size_t j = 0; j < p.n; ++j) {
                    const double delta = g[j] + cfg.weight_decay * p.p[j];
                    v[j] = cfg.momentum * v[j] + delta;
                    p.p[j] -= lr * v[j];
                }
            }

            if (cfg.record_reports) {
                StepReport r;
                r.step = step;
                r.losses = losses;
                r.conflicts = ir.conflicts;
                r.grad_norms.resize(bundle.grads.size());
                for (std::size_t li = 0; li < bundle.grads.size(); ++li) {
                    r.grad_norms[li].reserve(layout.size());
                    for (const Grad& g : bundle.grads[li]) {
                        r.grad_norms[li].push_back(l2_norm(std::span<const double>(g.data(), g.size())));
                    }
                }
                stats.reports.push_back(std::move(r));
            }
            if (conflict_log.is_open()) {
                for (std::size_t k = 0; k < layout.size(); ++k) {
                    conflict_log << "{\"step\":" << step << ",\"block\":\"" << layout[k].name
                                 << "\",\"count\":" << ir.conflicts[k] << "}\n";
                }
            }
            ++step;
        }
    }
    stats.steps = step;
    return stats;
}

std::vector<std::size_t> calibration_indices(std::size_t n, double fraction, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("calibration_indices: empty dataset");
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("calibration_indices: fraction must lie in (0, 1]");
    }
    std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    k = std::min(std::max<std::size_t>(k, 1), n);
    Rng rng(seed);
    std::vector<std::size_t> perm = rng.permutation(n);
    perm.resize(k);
    return perm;
}

std::vector<BatchNormState> recalibrate_stats(const PrunableModel& model,
                                              const std::vector<CapacityMask>& masks,
                                              const Tensor& calib_images) {
    if (model.blocks.empty()) return {};
    if (masks.size() != model.blocks.size()) {
        throw std::invalid_argument("recalibrate_stats: mask count does not match model");
    }
    if (calib_images.rank() != 4 || calib_images.shape[0] == 0) {
        throw std::invalid_argument("recalibrate_stats: calibration images must be [N,C,H,W] with N >= 1");
    }
    const std::size_t n = calib_images.shape[0];
    const bool mlp_entry = model.blocks.front().kind == LayerKind::Linear;
    Tensor x = mlp_entry ? calib_images.reshaped({n, calib_images.size() / n}) : calib_images;

    std::vector<BatchNormState> states;
    states.reserve(model.blocks.size());
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const BackboneBlock& b = model.blocks[i];
        const Tensor pre = b.kind == LayerKind::Linear ? forward_masked(b.linear, masks[i], x, nullptr)
                                                       : forward_masked(b.conv, masks[i], x, nullptr);
        BatchNormState st = b.norm;  // affine, eps, momentum carried over
        if (b.has_norm) {
            BnStatsAccumulator acc(b.out_channels());
            acc.add(pre);
            acc.finalize(st);
            const Tensor normed = batchnorm_eval(pre, st);
            x = b.relu ? relu(normed) : normed;
        } else {
            x = b.relu ? relu(pre) : pre;
        }
        states.push_back(std::move(st));
    }
    return states;
}

void store_bn_stats(PrunableModel& model, double capacity, std::vector<BatchNormState> stats) {
    for (auto it = model.bn_stats.begin(); it != model.bn_stats.end();) {
        if (std::abs(it->first - capacity) < 1e-12) {
            it = model.bn_stats.erase(it);
        } else {
            ++it;
        }
    }
    model.bn_stats.emplace(capacity, std::move(stats));
}

void adaptive_bn_recalibrate(PrunableModel& model, const Dataset& data, const std::vector<double>& capacities,
                             double calib_fraction, std::uint64_t seed) {
    for (double c : capacities) {
        if (!(c > 0.0) || c > 1.0) {
            throw std::invalid_argument("adaptive_bn_recalibrate: capacities must lie in (0, 1]");
        }
    }
    if (capacities.empty()) return;
    const std::vector<std::size_t> idx = calibration_indices(data.size(), calib_fraction, seed);
    const Dataset calib = dataset_subset(data, idx);
    for (double c : capacities) {
        store_bn_stats(model, c, recalibrate_stats(model, build_masks(model, c), calib.images));
    }
}

}  // namespace prunekit
