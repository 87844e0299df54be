#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/model.hpp"

namespace prunekit {

// One pruned backbone layer in coordinate form. Coordinates are
// (row, col) = (output neuron or kernel index, flattened input index:
// input feature for linear, (c, kh, kw) row-major for conv), sorted
// lexicographically and strictly increasing.
struct SparseLayer {
    LayerKind kind = LayerKind::Linear;
    std::vector<std::size_t> dense_shape;  // [out, in] or [O, C, kh, kw]
    std::size_t stride = 1;                // conv only
    std::size_t pad = 0;                   // conv only
    bool has_norm = true;
    bool relu = true;
    std::vector<std::uint32_t> rows;
    std::vector<std::uint32_t> cols;
    std::vector<double> values;
    Tensor bias;
    BatchNormState norm;  // statistics the subnetwork should normalize with

    std::size_t nnz() const { return values.size(); }
};

// A self-contained subnetwork: pruned backbone plus the (unpruned) shared
// embedding head and classifier.
struct SparseSubnetwork {
    double capacity = 1.0;
    bool structured = false;  // whole-kernel pruning
    std::vector<std::size_t> input_shape;
    std::vector<SparseLayer> layers;
    DenseLinear embedding_head;
    DenseLinear classifier;

    std::size_t total_nnz() const {
        std::size_t n = 0;
        for (const SparseLayer& l : layers) n += l.nnz();
        return n;
    }
};

// Extracts the capacity's subnetwork: per-layer top scores keep
// ceil(capacity * n) connections. Normalization statistics come from the
// capacity's recalibrated snapshot when the model holds one, otherwise from
// the shared dense estimates.
SparseSubnetwork prune(const PrunableModel& model, double capacity);

// Whole-kernel variant for conv backbones: keeps the ceil(capacity * O)
// kernels with the highest mean score per layer. Throws std::invalid_argument
// when any backbone layer is not convolutional.
SparseSubnetwork structured_prune(const PrunableModel& model, double capacity);

// Checks that every coordinate of `small` appears in `big`, layer by layer.
// Returns human-readable violation descriptions; empty means properly nested.
std::vector<std::string> verify_nesting(const SparseSubnetwork& small, const SparseSubnetwork& big);

// Little-endian binary coordinate format, versioned and crc-sealed.
void export_coo(const std::string& path, const SparseSubnetwork& net);

// Throws DataError on bad magic, version, checksum, truncation, out-of-range
// coordinates, or coordinates that are not strictly increasing.
SparseSubnetwork import_coo(const std::string& path);

// Densified form of a sparse subnetwork that evaluates through the exact
// masked forward path: zeros outside the pattern, masks equal to the
// pattern, per-layer statistics already in place.
struct DensifiedSubnetwork {
    PrunableModel model;
    std::vector<CapacityMask> masks;
};

DensifiedSubnetwork sparse_to_model(const SparseSubnetwork& net);

}  // namespace prunekit
