#include "prunekit/sparse.hpp"

#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "serialize.hpp"
#include "wire.hpp"

namespace prunekit {

namespace {

constexpr char kMagic[4] = {'P', 'K', 'C', 'O'};
constexpr std::uint32_t kVersion = 1;

SparseLayer extract_layer(const BackboneBlock& b, const CapacityMask& mask,
                          const BatchNormState* stats) {
    const Tensor& w = b.scored().weight;
    const std::size_t out = w.shape[0];
    const std::size_t per = w.size() / out;
    if (out > std::numeric_limits<std::uint32_t>::max() || per > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument("prune: layer too large for 32-bit coordinates");
    }
    SparseLayer sl;
    sl.kind = b.kind;
    sl.dense_shape = w.shape;
    if (b.kind == LayerKind::Conv) {
        sl.stride = b.conv.stride;
        sl.pad = b.conv.pad;
        sl.bias = b.conv.bias;
    } else {
        sl.bias = b.linear.bias;
    }
    sl.has_norm = b.has_norm;
    sl.relu = b.relu;
    if (b.has_norm) sl.norm = stats ? *stats : b.norm;
    const std::size_t kept = mask.popcount();
    sl.rows.reserve(kept);
    sl.cols.reserve(kept);
    sl.values.reserve(kept);
    for (std::size_t flat = 0; flat < w.size(); ++flat) {
        if (mask.bits.data[flat] == 0.0) continue;
        sl.rows.push_back(static_cast<std::uint32_t>(flat / per));
        sl.cols.push_back(static_cast<std::uint32_t>(flat % per));
        sl.values.push_back(w.data[flat]);
    }
    return sl;
}

SparseSubnetwork extract(const PrunableModel& model, double capacity,
                         const std::vector<CapacityMask>& masks, bool structured) {
    if (model.blocks.empty()) throw std::invalid_argument("prune: model has no backbone");
    const std::vector<BatchNormState>* stats = find_bn_stats(model, capacity);
    SparseSubnetwork net;
    net.capacity = capacity;
    net.structured = structured;
    net.input_shape = model.input_shape;
    net.layers.reserve(model.blocks.size());
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        net.layers.push_back(extract_layer(model.blocks[i], masks[i], stats ? &(*stats)[i] : nullptr));
    }
    net.embedding_head = model.embedding_head;
    net.classifier = model.classifier;
    return net;
}

void check_capacity(double capacity) {
    if (!(capacity > 0.0) || capacity > 1.0) {
        throw std::invalid_argument("prune: capacity must lie in (0, 1]");
    }
}

}  // namespace

SparseSubnetwork prune(const PrunableModel& model, double capacity) {
    check_capacity(capacity);
    return extract(model, capacity, build_masks(model, capacity), false);
}

SparseSubnetwork structured_prune(const PrunableModel& model, double capacity) {
    check_capacity(capacity);
    for (const BackboneBlock& b : model.blocks) {
        if (b.kind != LayerKind::Conv) {
            throw std::invalid_argument("structured_prune: every backbone layer must be convolutional");
        }
    }
    std::vector<CapacityMask> masks;
    masks.reserve(model.blocks.size());
    for (const BackboneBlock& b : model.blocks) {
        masks.push_back(capacity >= 1.0 ? dense_mask(b.scored()) : build_structured_mask(b.conv, capacity));
    }
    return extract(model, capacity, masks, true);
}

std::vector<std::string> verify_nesting(const SparseSubnetwork& small, const SparseSubnetwork& big) {
    std::vector<std::string> violations;
    if (small.layers.size() != big.layers.size()) {
        violations.push_back("layer counts differ: " + std::to_string(small.layers.size()) + " vs " +
                             std::to_string(big.layers.size()));
        return violations;
    }
    for (std::size_t li = 0; li < small.layers.size(); ++li) {
        const SparseLayer& s = small.layers[li];
        const SparseLayer& b = big.layers[li];
        if (s.dense_shape != b.dense_shape) {
            violations.push_back("layer " + std::to_string(li) + ": dense shapes differ");
            continue;
        }
        // Both coordinate lists are strictly increasing; a single merge pass
        // finds the entries of the smaller net missing from the bigger one.
        std::size_t j = 0;
        for (std::size_t i = 0; i < s.nnz(); ++i) {
            const std::uint64_t key = (static_cast<std::uint64_t>(s.rows[i]) << 32) | s.cols[i];
            while (j < b.nnz() &&
                   ((static_cast<std::uint64_t>(b.rows[j]) << 32) | b.cols[j]) < key) {
                ++j;
            }
            const bool present =
                j < b.nnz() && ((static_cast<std::uint64_t>(b.rows[j]) << 32) | b.cols[j]) == key;
            if (!present) {
                violations.push_back("layer " + std::to_string(li) + ": (" + std::to_string(s.rows[i]) + ", " +
                                     std::to_string(s.cols[i]) + ") missing from the larger subnetwork");
            }
        }
    }
    return violations;
}

void export_coo(const std::string& path, const SparseSubnetwork& net) {
    wire::Writer w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.f64(net.capacity);
    w.u8(net.structured ? 1 : 0);
    if (net.input_shape.size() != 3) throw std::invalid_argument("export_coo: input shape must be {C,H,W}");
    for (std::size_t d : net.input_shape) w.u64(d);
    w.u64(net.layers.size());
    for (const SparseLayer& l : net.layers) {
        w.u8(l.kind == LayerKind::Conv ? 1 : 0);
        w.u64(l.dense_shape.size());
        for (std::size_t d : l.dense_shape) w.u64(d);
        w.u64(l.stride);
        w.u64(l.pad);
        w.u8(l.has_norm ? 1 : 0);
        w.u8(l.relu ? 1 : 0);
        if (l.rows.size() != l.values.size() || l.cols.size() != l.values.size()) {
            throw std::invalid_argument("export_coo: coordinate arrays disagree in length");
        }
        w.u64(l.nnz());
        for (std::uint32_t v : l.rows) w.u32(v);
        for (std::uint32_t v : l.cols) w.u32(v);
        for (double v : l.values) w.f64(v);
        wire::put_tensor(w, l.bias);
        if (l.has_norm) wire::put_norm(w, l.norm);
    }
    wire::put_tensor(w, net.embedding_head.weight);
    wire::put_tensor(w, net.embedding_head.bias);
    wire::put_tensor(w, net.classifier.weight);
    wire::put_tensor(w, net.classifier.bias);
    wire::seal(w);
    wire::write_file(path, w.buf);
}

SparseSubnetwork import_coo(const std::string& path) {
    const std::vector<unsigned char> buf = wire::read_file(path);
    const std::string who = "coordinate file " + path;
    const std::size_t payload = wire::check_seal(buf, who);
    wire::Reader r(buf, payload, who);

    char magic[4];
    r.need(4);
    std::memcpy(magic, buf.data() + r.off, 4);
    r.off += 4;
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(who + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw DataError(who + ": unsupported version " + std::to_string(version));

    SparseSubnetwork net;
    net.capacity = r.f64();
    if (!(net.capacity > 0.0) || net.capacity > 1.0) throw DataError(who + ": capacity out of range");
    net.structured = r.u8() != 0;
    net.input_shape = {static_cast<std::size_t>(r.u64()), static_cast<std::size_t>(r.u64()),
                       static_cast<std::size_t>(r.u64())};
    const std::uint64_t n_layers = r.u64();
    if (n_layers > 1024) throw DataError(who + ": implausible layer count");
    for (std::uint64_t li = 0; li < n_layers; ++li) {
        SparseLayer l;
        l.kind = r.u8() ? LayerKind::Conv : LayerKind::Linear;
        const std::uint64_t rank = r.u64();
        const std::uint64_t want_rank = l.kind == LayerKind::Conv ? 4 : 2;
        if (rank != want_rank) throw DataError(who + ": layer " + std::to_string(li) + " has wrong rank");
        l.dense_shape.resize(rank);
        std::size_t numel = 1;
        for (auto& d : l.dense_shape) {
            d = static_cast<std::size_t>(r.u64());
            if (d == 0) throw DataError(who + ": zero-sized layer dimension");
            numel *= d;
        }
        l.stride = static_cast<std::size_t>(r.u64());
        l.pad = static_cast<std::size_t>(r.u64());
        l.has_norm = r.u8() != 0;
        l.relu = r.u8() != 0;
        const std::uint64_t nnz = r.u64();
        if (nnz > numel) throw DataError(who + ": more coordinates than dense entries");
        const std::size_t out = l.dense_shape[0];
        const std::size_t per = numel / out;
        l.rows.resize(nnz);
        l.cols.resize(nnz);
        l.values.resize(nnz);
        for (auto& v : l.rows) v = r.u32();
        for (auto& v : l.cols) v = r.u32();
        for (auto& v : l.values) v = r.f64();
        std::uint64_t prev = 0;
        for (std::size_t i = 0; i < nnz; ++i) {
            if (l.rows[i] >= out || l.cols[i] >= per) {
                throw DataError(who + ": coordinate out of range in layer " + std::to_string(li));
            }
            const std::uint64_t key = (static_cast<std::uint64_t>(l.rows[i]) << 32) | l.cols[i];
            if (i > 0 && key <= prev) {
                throw DataError(who + ": coordinates not strictly increasing in layer " + std::to_string(li));
            }
            prev = key;
        }
        l.bias = wire::get_tensor_checked(r, {out});
        if (l.has_norm) l.norm = wire::get_norm(r, out);
        net.layers.push_back(std::move(l));
    }
    net.embedding_head.weight = wire::get_tensor(r);
    if (net.embedding_head.weight.rank() != 2) throw DataError(who + ": embedding head must be rank 2");
    net.embedding_head.bias = wire::get_tensor_checked(r, {net.embedding_head.weight.shape[0]});
    net.classifier.weight = wire::get_tensor(r);
    if (net.classifier.weight.rank() != 2 ||
        net.classifier.weight.shape[1] != net.embedding_head.weight.shape[0]) {
        throw DataError(who + ": classifier does not match the embedding head");
    }
    net.classifier.bias = wire::get_tensor_checked(r, {net.classifier.weight.shape[0]});
    if (!r.done()) throw DataError(who + ": trailing bytes");
    return net;
}

DensifiedSubnetwork sparse_to_model(const SparseSubnetwork& net) {
    DensifiedSubnetwork out;
    PrunableModel& m = out.model;
    m.input_shape = net.input_shape;
    for (const SparseLayer& l : net.layers) {
        BackboneBlock b;
        b.kind = l.kind;
        b.has_norm = l.has_norm;
        b.relu = l.relu;
        if (l.has_norm) b.norm = l.norm;
        ScoredTensor core;
        core.weight = Tensor::zeros(l.dense_shape);
        core.score = Tensor::zeros(l.dense_shape);
        CapacityMask mask;
        mask.capacity = net.capacity;
        mask.bits = Tensor::zeros(l.dense_shape);
        const std::size_t per = core.weight.size() / l.dense_shape[0];
        for (std::size_t i = 0; i < l.nnz(); ++i) {
            const std::size_t flat = static_cast<std::size_t>(l.rows[i]) * per + l.cols[i];
            core.weight.data[flat] = l.values[i];
            core.score.data[flat] = 1.0;
            mask.bits.data[flat] = 1.0;
        }
        if (l.kind == LayerKind::Conv) {
            b.conv.core = std::move(core);
            b.conv.bias = l.bias;
            b.conv.stride = l.stride;
            b.conv.pad = l.pad;
        } else {
            b.linear.core = std::move(core);
            b.linear.bias = l.bias;
        }
        m.blocks.push_back(std::move(b));
        out.masks.push_back(std::move(mask));
    }
    m.embedding_head = net.embedding_head;
    m.classifier = net.classifier;
    return out;
}

}  // namespace prunekit
