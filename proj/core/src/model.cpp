#include "prunekit/model.hpp"

#include <cmath>
#include <stdexcept>

#include "prunekit/datasets.hpp"
#include "prunekit/ops.hpp"

namespace prunekit {

PrunableModel build_model(const ModelConfig& cfg, const std::vector<std::size_t>& input_shape, Rng& rng) {
    if (input_shape.size() != 3) {
        throw std::invalid_argument("build_model: input shape must be {C,H,W}");
    }
    if (cfg.embed_dim == 0 || cfg.classes == 0) {
        throw std::invalid_argument("build_model: embed_dim and classes must be positive");
    }
    PrunableModel m;
    m.input_shape = input_shape;
    std::size_t flat_out = 0;
    if (cfg.arch == ModelConfig::Arch::Mlp) {
        if (cfg.hidden.empty()) throw std::invalid_argument("build_model: MLP needs at least one hidden layer");
        std::size_t in = input_shape[0] * input_shape[1] * input_shape[2];
        for (std::size_t width : cfg.hidden) {
            BackboneBlock b;
            b.kind = LayerKind::Linear;
            b.linear = make_prunable_linear(in, width, rng);
            b.has_norm = cfg.norm;
            if (cfg.norm) b.norm = make_batchnorm(width, cfg.bn_eps, cfg.bn_momentum);
            m.blocks.push_back(std::move(b));
            in = width;
        }
        flat_out = in;
    } else {
        if (cfg.channels.empty()) throw std::invalid_argument("build_model: conv net needs at least one stage");
        std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
        for (std::size_t ch : cfg.channels) {
            BackboneBlock b;
            b.kind = LayerKind::Conv;
            b.conv = make_prunable_conv(c, ch, cfg.kernel, cfg.stride, cfg.pad, rng);
            b.has_norm = cfg.norm;
            if (cfg.norm) b.norm = make_batchnorm(ch, cfg.bn_eps, cfg.bn_momentum);
            m.blocks.push_back(std::move(b));
            const std::size_t hp = h + 2 * cfg.pad;
            const std::size_t wp = w + 2 * cfg.pad;
            if (hp < cfg.kernel || wp < cfg.kernel) {
                throw std::invalid_argument("build_model: kernel does not fit the stage input");
            }
            h = (hp - cfg.kernel) / cfg.stride + 1;
            w = (wp - cfg.kernel) / cfg.stride + 1;
            c = ch;
        }
        flat_out = c * h * w;
    }
    m.embedding_head = make_dense_linear(flat_out, cfg.embed_dim, rng);
    m.classifier = make_dense_linear(cfg.embed_dim, cfg.classes, rng);
    return m;
}

std::vector<CapacityMask> build_masks(const PrunableModel& model, double capacity) {
    if (!(capacity > 0.0) || capacity > 1.0) {
        throw std::invalid_argument("build_masks: capacity must lie in (0, 1]");
    }
    std::vector<CapacityMask> out;
    out.reserve(model.blocks.size());
    for (const BackboneBlock& b : model.blocks) {
        out.push_back(capacity >= 1.0 ? dense_mask(b.scored()) : build_mask(b.scored(), capacity));
    }
    return out;
}

std::vector<CapacityMask> build_masks(const PrunableModel& model, double capacity,
                                      const std::vector<CapacityMask>& parents) {
    if (parents.size() != model.blocks.size()) {
        throw std::invalid_argument("build_masks: parent mask count mismatch");
    }
    std::vector<CapacityMask> out;
    out.reserve(model.blocks.size());
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        out.push_back(build_mask(model.blocks[i].scored(), capacity, parents[i]));
    }
    return out;
}

const std::vector<BatchNormState>* find_bn_stats(const PrunableModel& model, double capacity) {
    for (const auto& [c, states] : model.bn_stats) {
        if (std::abs(c - capacity) < 1e-12) return &states;
    }
    return nullptr;
}

namespace {

void check_images(const PrunableModel& model, const Tensor& images) {
    if (images.rank() != 4 || images.shape[1] != model.input_shape[0] || images.shape[2] != model.input_shape[1] ||
        images.shape[3] != model.input_shape[2]) {
        throw std::invalid_argument("model_forward: images " + images.shape_str() + " do not match model input");
    }
}

}  // namespace

Tensor model_forward(PrunableModel& model, const std::vector<CapacityMask>& masks, const Tensor& images,
                     StatMode stat_mode, const std::vector<BatchNormState>* stat_override, ForwardTrace* trace) {
    check_images(model, images);
    if (masks.size() != model.blocks.size()) {
        throw std::invalid_argument("model_forward: expected " + std::to_string(model.blocks.size()) + " masks, got " +
                                    std::to_string(masks.size()));
    }
    if (stat_override && stat_mode != StatMode::Running) {
        throw std::invalid_argument("model_forward: statistic overrides require Running mode");
    }
    if (stat_override && stat_override->size() != model.blocks.size()) {
        throw std::invalid_argument("model_forward: statistic override count mismatch");
    }
    const std::size_t n = images.shape[0];
    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    t.blocks.assign(model.blocks.size(), {});

    const bool mlp_entry = !model.blocks.empty() && model.blocks.front().kind == LayerKind::Linear;
    Tensor x = mlp_entry ? images.reshaped({n, images.size() / n}) : images;

    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        BackboneBlock& b = model.blocks[i];
        BlockTrace& bt = t.blocks[i];
        Tensor pre = b.kind == LayerKind::Linear ? forward_masked(b.linear, masks[i], x, &bt.lcache)
                                                 : forward_masked(b.conv, masks[i], x, &bt.ccache);
        bt.preact = pre;
        Tensor normed;
        if (b.has_norm) {
            switch (stat_mode) {
                case StatMode::Batch:
                    normed = batchnorm_train(pre, b.norm, &bt.bn, false);
                    break;
                case StatMode::BatchUpdateRunning:
                    normed = batchnorm_train(pre, b.norm, &bt.bn, true);
                    break;
                case StatMode::Running:
                    normed = batchnorm_eval(pre, stat_override ? (*stat_override)[i] : b.norm);
                    break;
            }
        } else {
            normed = pre;
        }
        bt.normed = normed;
        x = b.relu ? relu(normed) : normed;
    }

    t.flat = x.rank() == 2 ? x : x.reshaped({n, x.size() / n});
    t.embed = forward_dense(model.embedding_head, t.flat, &t.embed_cache);
    t.logits = forward_dense(model.classifier, t.embed, &t.cls_cache);
    return t.logits;
}

ModelGrads model_backward(const PrunableModel& model, const std::vector<CapacityMask>& masks,
                          const ForwardTrace& trace, const Tensor& grad_logits) {
    if (trace.blocks.size() != model.blocks.size()) {
        throw std::invalid_argument("model_backward: trace does not match model");
    }
    ModelGrads g;
    g.layers.resize(model.blocks.size());
    g.bn_gamma.resize(model.blocks.size());
    g.bn_beta.resize(model.blocks.size());

    g.cls = backward_dense(model.classifier, trace.cls_cache, grad_logits);
    g.embed = backward_dense(model.embedding_head, trace.embed_cache, g.cls.grad_input);
    Tensor grad = g.embed.grad_input;  // [N, F]

    for (std::size_t ii = model.blocks.size(); ii-- > 0;) {
        const BackboneBlock& b = model.blocks[ii];
        const BlockTrace& bt = trace.blocks[ii];
        // Undo the flatten for the topmost conv stage.
        if (grad.rank() == 2 && bt.normed.rank() == 4) grad = grad.reshaped(bt.normed.shape);
        if (b.relu) grad = relu_backward(bt.normed, grad);
        if (b.has_norm) {
            BnGrads bn = batchnorm_backward(grad, bt.bn, b.norm);
            g.bn_gamma[ii] = std::move(bn.grad_gamma);
            g.bn_beta[ii] = std::move(bn.grad_beta);
            grad = std::move(bn.grad_input);
        }
        if (b.kind == LayerKind::Linear) {
            g.layers[ii] = backward_masked(b.linear, masks[ii], bt.lcache, grad);
        } else {
            g.layers[ii] = backward_masked(b.conv, masks[ii], bt.ccache, grad);
        }
        grad = g.layers[ii].grad_input;
    }
    return g;
}

EvalOutput model_eval_masked(const PrunableModel& model, const std::vector<CapacityMask>& masks,
                             const std::vector<BatchNormState>* stats, const Tensor& images) {
    EvalOutput out;
    out.dense_stats_fallback = stats == nullptr;
    ForwardTrace trace;
    // Running mode never mutates the model; the non-const parameter of
    // model_forward exists for the running-statistic update mode only.
    Tensor logits = model_forward(const_cast<PrunableModel&>(model), masks, images, StatMode::Running, stats, &trace);
    out.logits = std::move(logits);
    out.embeddings = std::move(trace.embed);
    return out;
}

EvalOutput model_eval(const PrunableModel& model, double capacity, const Tensor& images) {
    const std::vector<BatchNormState>* stats = find_bn_stats(model, capacity);
    const std::vector<CapacityMask> masks = build_masks(model, capacity);
    EvalOutput out = model_eval_masked(model, masks, stats, images);
    out.dense_stats_fallback = stats == nullptr && capacity < 1.0;
    return out;
}

double evaluate_accuracy_masked(const PrunableModel& model, const std::vector<CapacityMask>& masks,
                                const std::vector<BatchNormState>* stats, const Dataset& data,
                                std::size_t eval_batch) {
    if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += eval_batch) {
        const std::size_t take = std::min(eval_batch, data.size() - start);
        const Dataset slice = dataset_range(data, start, take);
        const EvalOutput out = model_eval_masked(model, masks, stats, slice.images);
        for (std::size_t i = 0; i < take; ++i) {
            const double* row = out.logits.data.data() + i * model.classes();
            std::size_t best = 0;
            for (std::size_t c = 1; c < model.classes(); ++c) {
                if (row[c] > row[best]) best = c;
            }
            if (static_cast<int>(best) == slice.labels[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_accuracy(const PrunableModel& model, double capacity, const Dataset& data, std::size_t eval_batch) {
    const std::vector<CapacityMask> masks = build_masks(model, capacity);
    const std::vector<BatchNormState>* stats = find_bn_stats(model, capacity);
    return evaluate_accuracy_masked(model, masks, stats, data, eval_batch);
}

}  // namespace prunekit
