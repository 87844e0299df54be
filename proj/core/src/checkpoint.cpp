#include "prunekit/checkpoint.hpp"

#include <stdexcept>

#include "serialize.hpp"
#include "wire.hpp"

namespace prunekit {

using wire::get_norm;
using wire::get_tensor;
using wire::get_tensor_checked;
using wire::put_norm;
using wire::put_tensor;

namespace {

constexpr char kMagic[4] = {'P', 'K', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const PrunableModel& model, std::uint64_t seed,
                     const std::string& config_echo) {
    if (model.input_shape.size() != 3) throw std::invalid_argument("save_checkpoint: model has no input shape");
    wire::Writer w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.str(config_echo);
    w.u64(seed);
    for (std::size_t d : model.input_shape) w.u64(d);

    w.u64(model.blocks.size());
    for (const BackboneBlock& b : model.blocks) {
        w.u8(b.kind == LayerKind::Conv ? 1 : 0);
        w.u8(b.has_norm ? 1 : 0);
        w.u8(b.relu ? 1 : 0);
        if (b.kind == LayerKind::Conv) {
            const auto& s = b.conv.core.weight.shape;  // [O, C, kh, kw]
            for (std::size_t d : s) w.u64(d);
            w.u64(b.conv.stride);
            w.u64(b.conv.pad);
        } else {
            w.u64(b.linear.out_features());
            w.u64(b.linear.in_features());
        }
    }
    w.u64(model.embed_dim());
    w.u64(model.classes());

    for (const BackboneBlock& b : model.blocks) {
        const ScoredTensor& core = b.scored();
        put_tensor(w, core.weight);
        put_tensor(w, core.score);
        put_tensor(w, b.kind == LayerKind::Conv ? b.conv.bias : b.linear.bias);
        if (b.has_norm) put_norm(w, b.norm);
    }
    put_tensor(w, model.embedding_head.weight);
    put_tensor(w, model.embedding_head.bias);
    put_tensor(w, model.classifier.weight);
    put_tensor(w, model.classifier.bias);

    w.u64(model.bn_stats.size());
    for (const auto& [capacity, states] : model.bn_stats) {
        if (states.size() != model.blocks.size()) {
            throw std::invalid_argument("save_checkpoint: statistics snapshot does not match the model");
        }
        w.f64(capacity);
        for (std::size_t i = 0; i < model.blocks.size(); ++i) {
            if (model.blocks[i].has_norm) put_norm(w, states[i]);
        }
    }

    wire::seal(w);
    wire::write_file(path, w.buf);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::vector<unsigned char> buf = wire::read_file(path);
    const std::string who = "checkpoint " + path;
    const std::size_t payload = wire::check_seal(buf, who);
    wire::Reader r(buf, payload, who);

    char magic[4];
    r.need(4);
    std::memcpy(magic, buf.data() + r.off, 4);
    r.off += 4;
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(who + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw DataError(who + ": unsupported version " + std::to_string(version));

    Checkpoint ck;
    ck.config_echo = r.str();
    ck.seed = r.u64();
    PrunableModel& m = ck.model;
    m.input_shape = {static_cast<std::size_t>(r.u64()), static_cast<std::size_t>(r.u64()),
                     static_cast<std::size_t>(r.u64())};

    const std::uint64_t n_blocks = r.u64();
    if (n_blocks > 1024) throw DataError(who + ": implausible block count");
    std::vector<std::vector<std::size_t>> weight_shapes;
    for (std::uint64_t i = 0; i < n_blocks; ++i) {
        BackboneBlock b;
        b.kind = r.u8() ? LayerKind::Conv : LayerKind::Linear;
        b.has_norm = r.u8() != 0;
        b.relu = r.u8() != 0;
        if (b.kind == LayerKind::Conv) {
            std::vector<std::size_t> s(4);
            for (auto& d : s) d = static_cast<std::size_t>(r.u64());
            b.conv.stride = static_cast<std::size_t>(r.u64());
            b.conv.pad = static_cast<std::size_t>(r.u64());
            weight_shapes.push_back(s);
        } else {
            const std::size_t out = static_cast<std::size_t>(r.u64());
            const std::size_t in = static_cast<std::size_t>(r.u64());
            weight_shapes.push_back({out, in});
        }
        m.blocks.push_back(std::move(b));
    }
    const std::size_t embed_dim = static_cast<std::size_t>(r.u64());
    const std::size_t classes = static_cast<std::size_t>(r.u64());

    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        BackboneBlock& b = m.blocks[i];
        const std::vector<std::size_t>& ws = weight_shapes[i];
        ScoredTensor& core = b.scored();
        core.weight = get_tensor_checked(r, ws);
        core.score = get_tensor_checked(r, ws);
        Tensor bias = get_tensor_checked(r, {ws[0]});
        if (b.kind == LayerKind::Conv) {
            b.conv.bias = std::move(bias);
        } else {
            b.linear.bias = std::move(bias);
        }
        if (b.has_norm) b.norm = get_norm(r, ws[0]);
    }
    m.embedding_head.weight = get_tensor(r);
    if (m.embedding_head.weight.rank() != 2 || m.embedding_head.weight.shape[0] != embed_dim) {
        throw DataError(who + ": embedding head shape mismatch");
    }
    m.embedding_head.bias = get_tensor_checked(r, {embed_dim});
    m.classifier.weight = get_tensor_checked(r, {classes, embed_dim});
    m.classifier.bias = get_tensor_checked(r, {classes});

    const std::uint64_t n_snapshots = r.u64();
    if (n_snapshots > 4096) throw DataError(who + ": implausible snapshot count");
    for (std::uint64_t s = 0; s < n_snapshots; ++s) {
        const double capacity = r.f64();
        std::vector<BatchNormState> states(m.blocks.size());
        for (std::size_t i = 0; i < m.blocks.size(); ++i) {
            if (m.blocks[i].has_norm) states[i] = get_norm(r, weight_shapes[i][0]);
        }
        m.bn_stats.emplace(capacity, std::move(states));
    }

    if (!r.done()) throw DataError(who + ": trailing bytes");
    return ck;
}

}  // namespace prunekit
