#include "prunekit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "prunekit/errors.hpp"
#include "prunekit/ops.hpp"

namespace prunekit {

namespace {

constexpr std::size_t kQueryChunk = 256;

void check_pair(const EmbeddingSet& q, const EmbeddingSet& g, const char* who) {
    if (q.size() == 0 || g.size() == 0) throw std::invalid_argument(std::string(who) + ": empty embedding set");
    if (q.dim() != g.dim() || q.dim() == 0) {
        throw std::invalid_argument(std::string(who) + ": embedding dimensions disagree");
    }
}

// Gallery indices ranked by (similarity desc, index asc), the excluded index
// dropped. keep == 0 keeps the whole ranking.
void ranked_indices(const double* sims, std::size_t n, std::size_t exclude, std::size_t keep,
                    std::vector<std::size_t>& order) {
    order.clear();
    for (std::size_t i = 0; i < n; ++i) {
        if (i != exclude) order.push_back(i);
    }
    const auto cmp = [sims](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    };
    if (keep == 0 || keep >= order.size()) {
        std::sort(order.begin(), order.end(), cmp);
    } else {
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), cmp);
        order.resize(keep);
    }
}

// Runs fn(query index, similarity row) over all queries, chunked so the
// similarity matrix never exceeds kQueryChunk rows.
template <typename Fn>
void for_each_query(const EmbeddingSet& q, const EmbeddingSet& g, Fn&& fn) {
    for (std::size_t start = 0; start < q.size(); start += kQueryChunk) {
        const std::size_t take = std::min(kQueryChunk, q.size() - start);
        Tensor chunk({take, q.dim()});
        std::copy_n(q.embeddings.data.data() + start * q.dim(), take * q.dim(), chunk.data.data());
        const Tensor sims = matmul_nt(chunk, g.embeddings);
        for (std::size_t i = 0; i < take; ++i) {
            fn(start + i, sims.data.data() + i * g.size());
        }
    }
}

}  // namespace

EmbeddingSet extract_embeddings(const PrunableModel& model, double capacity, const Dataset& data,
                                std::size_t batch) {
    if (data.size() == 0) throw std::invalid_argument("extract_embeddings: empty dataset");
    if (batch == 0) throw std::invalid_argument("extract_embeddings: batch must be >= 1");
    EmbeddingSet set;
    set.capacity = capacity;
    set.labels = data.labels;
    const std::size_t dim = model.embed_dim();
    set.embeddings = Tensor({data.size(), dim});
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t take = std::min(batch, data.size() - start);
        const Dataset slice = dataset_range(data, start, take);
        const EvalOutput out = model_eval(model, capacity, slice.images);
        for (std::size_t i = 0; i < take; ++i) {
            const double* src = out.embeddings.data.data() + i * dim;
            double* dst = set.embeddings.data.data() + (start + i) * dim;
            const double norm = l2_norm(std::span<const double>(src, dim));
            if (norm < 1e-12) {
                std::fill_n(dst, dim, 0.0);
            } else {
                for (std::size_t d = 0; d < dim; ++d) dst[d] = src[d] / norm;
            }
        }
    }
    return set;
}

double mean_average_precision(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                              bool exclude_same_index) {
    check_pair(queries, gallery, "mean_average_precision");
    const std::size_t none = static_cast<std::size_t>(-1);
    double total = 0.0;
    std::size_t counted = 0;
    std::vector<std::size_t> order;
    for_each_query(queries, gallery, [&](std::size_t qi, const double* sims) {
        const std::size_t exclude = exclude_same_index ? qi : none;
        std::size_t relevant = 0;
        for (std::size_t j = 0; j < gallery.size(); ++j) {
            if (j != exclude && gallery.labels[j] == queries.labels[qi]) ++relevant;
        }
        if (relevant == 0) return;
        ranked_indices(sims, gallery.size(), exclude, 0, order);
        double ap = 0.0;
        std::size_t hits = 0;
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            if (gallery.labels[order[rank]] == queries.labels[qi]) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
            }
        }
        total += ap / static_cast<double>(relevant);
        ++counted;
    });
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double recall_at_k(const EmbeddingSet& queries, const EmbeddingSet& gallery, std::size_t k,
                   bool exclude_same_index) {
    check_pair(queries, gallery, "recall_at_k");
    if (k == 0) throw std::invalid_argument("recall_at_k: k must be >= 1");
    const std::size_t none = static_cast<std::size_t>(-1);
    std::size_t hit = 0;
    std::size_t counted = 0;
    std::vector<std::size_t> order;
    for_each_query(queries, gallery, [&](std::size_t qi, const double* sims) {
        const std::size_t exclude = exclude_same_index ? qi : none;
        bool any_relevant = false;
        for (std::size_t j = 0; j < gallery.size() && !any_relevant; ++j) {
            if (j != exclude && gallery.labels[j] == queries.labels[qi]) any_relevant = true;
        }
        if (!any_relevant) return;
        ranked_indices(sims, gallery.size(), exclude, k, order);
        ++counted;
        for (std::size_t idx : order) {
            if (gallery.labels[idx] == queries.labels[qi]) {
                ++hit;
                return;
            }
        }
    });
    return counted == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(counted);
}

EvalMatrix cross_test_matrix(const PrunableModel& query_model, const PrunableModel& gallery_model,
                             const std::vector<double>& capacities, const Dataset& query_data,
                             const Dataset& gallery_data, const std::string& metric, std::size_t k,
                             bool exclude_same_index, std::size_t batch) {
    if (capacities.empty()) throw std::invalid_argument("cross_test_matrix: no capacities");
    const bool use_map = metric == "map";
    if (!use_map && metric != "recall") {
        throw std::invalid_argument("cross_test_matrix: metric must be \"map\" or \"recall\"");
    }
    EvalMatrix out;
    out.metric = use_map ? "map" : "recall@" + std::to_string(k);
    out.capacities = capacities;

    std::vector<EmbeddingSet> query_sets, gallery_sets;
    query_sets.reserve(capacities.size());
    gallery_sets.reserve(capacities.size());
    for (double c : capacities) {
        query_sets.push_back(extract_embeddings(query_model, c, query_data, batch));
        gallery_sets.push_back(extract_embeddings(gallery_model, c, gallery_data, batch));
    }
    out.values.assign(capacities.size(), std::vector<double>(capacities.size(), 0.0));
    for (std::size_t i = 0; i < capacities.size(); ++i) {
        for (std::size_t j = 0; j < capacities.size(); ++j) {
            out.values[i][j] = use_map
                                   ? mean_average_precision(query_sets[i], gallery_sets[j], exclude_same_index)
                                   : recall_at_k(query_sets[i], gallery_sets[j], k, exclude_same_index);
        }
    }
    return out;
}

void write_eval_matrix_json(const std::string& path, const EvalMatrix& matrix) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    const auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    f << "{\n  \"metric\": \"" << matrix.metric << "\",\n  \"capacities\": [";
    for (std::size_t i = 0; i < matrix.capacities.size(); ++i) {
        f << (i ? ", " : "") << num(matrix.capacities[i]);
    }
    f << "],\n  \"values\": [\n";
    for (std::size_t i = 0; i < matrix.values.size(); ++i) {
        f << "    [";
        for (std::size_t j = 0; j < matrix.values[i].size(); ++j) {
            f << (j ? ", " : "") << num(matrix.values[i][j]);
        }
        f << "]" << (i + 1 < matrix.values.size() ? "," : "") << "\n";
    }
    f << "  ]\n}\n";
    if (!f) throw DataError("cannot write " + path);
}

}  // namespace prunekit
