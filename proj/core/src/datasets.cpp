#include "prunekit/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "prunekit/errors.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(path + ": truncated header");
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    return in;
}

}  // namespace

std::vector<std::size_t> Dataset::item_shape() const {
    if (images.rank() != 4) throw std::invalid_argument("Dataset: images must be rank 4");
    return {images.shape[1], images.shape[2], images.shape[3]};
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs = open_binary(images_path);
    const std::uint32_t img_magic = read_be32(imgs, images_path);
    if (img_magic != 0x00000803u) {
        throw DataError(images_path + ": bad magic " + std::to_string(img_magic) + " (want 2051)");
    }
    const std::uint32_t n = read_be32(imgs, images_path);
    const std::uint32_t rows = read_be32(imgs, images_path);
    const std::uint32_t cols = read_be32(imgs, images_path);
    if (n == 0 || rows == 0 || cols == 0) throw DataError(images_path + ": empty dimensions");

    std::ifstream labs = open_binary(labels_path);
    const std::uint32_t lab_magic = read_be32(labs, labels_path);
    if (lab_magic != 0x00000801u) {
        throw DataError(labels_path + ": bad magic " + std::to_string(lab_magic) + " (want 2049)");
    }
    const std::uint32_t n_labels = read_be32(labs, labels_path);
    if (n_labels != n) {
        throw DataError(labels_path + ": " + std::to_string(n_labels) + " labels for " + std::to_string(n) +
                        " images in " + images_path);
    }

    Dataset ds;
    ds.images = Tensor({n, 1, rows, cols});
    const std::size_t pixels = std::size_t(n) * rows * cols;
    std::vector<unsigned char> buf(pixels);
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels))) {
        throw DataError(images_path + ": truncated image data");
    }
    for (std::size_t i = 0; i < pixels; ++i) ds.images[i] = buf[i] / 255.0;

    std::vector<unsigned char> lbuf(n);
    if (!labs.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(n))) {
        throw DataError(labels_path + ": truncated label data");
    }
    ds.labels.assign(lbuf.begin(), lbuf.end());
    return ds;
}

Dataset load_cifar_binary(const std::vector<std::string>& paths) {
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
    if (paths.empty()) throw DataError("load_cifar_binary: no files given");
    std::vector<unsigned char> raw;
    for (const std::string& path : paths) {
        std::ifstream in = open_binary(path);
        in.seekg(0, std::ios::end);
        const auto len = static_cast<std::size_t>(in.tellg());
        in.seekg(0);
        if (len % kRecord != 0) {
            throw DataError(path + ": size " + std::to_string(len) + " is not a multiple of the " +
                            std::to_string(kRecord) + "-byte record");
        }
        const std::size_t at = raw.size();
        raw.resize(at + len);
        if (!in.read(reinterpret_cast<char*>(raw.data() + at), static_cast<std::streamsize>(len))) {
            throw DataError(path + ": read failed");
        }
    }
    const std::size_t n = raw.size() / kRecord;
    if (n == 0) throw DataError("load_cifar_binary: no records");
    Dataset ds;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = raw.data() + i * kRecord;
        ds.labels[i] = rec[0];
        for (std::size_t j = 0; j < 3 * 32 * 32; ++j) ds.images[i * 3 * 32 * 32 + j] = rec[1 + j] / 255.0;
    }
    return ds;
}

Dataset synthetic_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed) {
    if (classes == 0 || per_class == 0 || dim == 0) {
        throw std::invalid_argument("synthetic_blobs: classes, per_class and dim must be positive");
    }
    Rng rng(seed);
    std::vector<std::vector<double>> centers;
    centers.reserve(classes);
    while (centers.size() < classes) {
        std::vector<double> c(dim);
        for (auto& v : c) v = rng.uniform(0.2, 0.8);
        bool ok = true;
        for (const auto& other : centers) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) d2 += (c[i] - other[i]) * (c[i] - other[i]);
            if (std::sqrt(d2) < 0.2) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(c));
    }
    const std::size_t n = classes * per_class;
    Dataset ds;
    ds.images = Tensor({n, dim, 1, 1});
    ds.labels.resize(n);
    std::size_t at = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s, ++at) {
            ds.labels[at] = static_cast<int>(c);
            for (std::size_t i = 0; i < dim; ++i) ds.images[at * dim + i] = centers[c][i] + 0.02 * rng.normal();
        }
    }
    const std::vector<std::size_t> perm = rng.permutation(n);
    return dataset_subset(ds, perm);
}

Dataset dataset_subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t item = ds.images.size() / std::max<std::size_t>(ds.size(), 1);
    Dataset out;
    std::vector<std::size_t> shape = ds.images.shape;
    shape[0] = indices.size();
    out.images = Tensor(shape);
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= ds.size()) throw std::invalid_argument("dataset_subset: index out of range");
        std::copy(ds.images.data.begin() + static_cast<std::ptrdiff_t>(src * item),
                  ds.images.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * item),
                  out.images.data.begin() + static_cast<std::ptrdiff_t>(i * item));
        out.labels[i] = ds.labels[src];
    }
    return out;
}

Dataset dataset_range(const Dataset& ds, std::size_t start, std::size_t count) {
    if (start + count > ds.size()) throw std::invalid_argument("dataset_range: out of range");
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    return dataset_subset(ds, idx);
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffled)
    : ds_(&ds), batch_size_(batch_size) {
    if (batch_size == 0) throw std::invalid_argument("BatchIterator: batch size must be positive");
    order_.resize(ds.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffled) {
        Rng rng(seed);
        rng.shuffle(order_);
    }
}

std::size_t BatchIterator::batches() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t take = std::min(batch_size_, order_.size() - pos_);
    out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                       order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
    Dataset sub = dataset_subset(*ds_, out.indices);
    out.images = std::move(sub.images);
    out.labels = std::move(sub.labels);
    pos_ += take;
    return true;
}

}  // namespace prunekit
