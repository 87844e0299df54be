#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// Labeled image collection. images is [N,C,H,W]; loaders scale raw bytes to
// [0,1]. Synthetic vector data uses H = W = 1.
struct Dataset {
    Tensor images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> item_shape() const;  // {C,H,W}
};

// IDX-format pair (big-endian headers): images file with magic 0x00000803 and
// dims [N, rows, cols], labels file with magic 0x00000801 and dims [N].
// Throws DataError on unreadable files, bad magic, truncation, or a count
// mismatch between the two files.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Concatenates binary batch files of 3073-byte records (1 label byte +
// 3x32x32 pixels). Throws DataError on size not a multiple of the record
// size, or no records.
Dataset load_cifar_binary(const std::vector<std::string>& paths);

// Gaussian class blobs: `classes` centers in [0.2, 0.8]^dim kept at least 0.2
// apart, per-point noise sigma 0.02 — far smaller than the separation, so the
// classes are linearly separable by a margin. Samples come out shuffled.
// Images are [N, dim, 1, 1].
Dataset synthetic_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed);

Dataset dataset_subset(const Dataset& ds, const std::vector<std::size_t>& indices);
Dataset dataset_range(const Dataset& ds, std::size_t start, std::size_t count);

struct Batch {
    Tensor images;
    std::vector<int> labels;
    std::vector<std::size_t> indices;  // positions in the source dataset
};

// One epoch over a seeded permutation of the dataset. Every item appears in
// exactly one batch; the final batch may be short. The same seed always
// produces the same order.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffled = true);
    // Fills `out` and returns true, or returns false at epoch end.
    bool next(Batch& out);
    std::size_t batches() const;

private:
    const Dataset* ds_;
    std::vector<std::size_t> order_;
    std::size_t batch_size_;
    std::size_t pos_ = 0;
};

}  // namespace prunekit
