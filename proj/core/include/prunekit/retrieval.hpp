#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "prunekit/datasets.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// L2-normalized embeddings for one dataset at one capacity. Rows whose raw
// embedding has norm below 1e-12 stay zero and score 0 against everything.
struct EmbeddingSet {
    Tensor embeddings;  // [N, D]
    std::vector<int> labels;
    double capacity = 1.0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return embeddings.rank() == 2 ? embeddings.shape[1] : 0; }
};

EmbeddingSet extract_embeddings(const PrunableModel& model, double capacity, const Dataset& data,
                                std::size_t batch = 256);

// Ranking uses cosine similarity (dot product of normalized rows); ties break
// toward the smaller gallery index. exclude_same_index drops gallery item i
// for query i — set it when querying a set against itself. Queries with no
// relevant gallery item are left out of the mean; the metric is 0 when no
// query has one.
double mean_average_precision(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                              bool exclude_same_index = false);

// Fraction of queries whose top-k contains at least one same-label item.
// Queries with no same-label gallery entry are dropped from the denominator,
// mirroring mean_average_precision; k must be >= 1; k beyond the gallery size
// behaves like the gallery size.
double recall_at_k(const EmbeddingSet& queries, const EmbeddingSet& gallery, std::size_t k,
                   bool exclude_same_index = false);

// values[i][j] = metric(queries embedded at capacity i, gallery embedded at
// capacity j). Query embeddings come from query_model, gallery embeddings
// from gallery_model, so compatibility across independently trained models
// is the cross-model call with two different checkpoints.
struct EvalMatrix {
    std::string metric;  // "map" or "recall@<k>"
    std::vector<double> capacities;
    std::vector<std::vector<double>> values;
};

EvalMatrix cross_test_matrix(const PrunableModel& query_model, const PrunableModel& gallery_model,
                             const std::vector<double>& capacities, const Dataset& query_data,
                             const Dataset& gallery_data, const std::string& metric, std::size_t k = 1,
                             bool exclude_same_index = false, std::size_t batch = 256);

void write_eval_matrix_json(const std::string& path, const EvalMatrix& matrix);

}  // namespace prunekit
