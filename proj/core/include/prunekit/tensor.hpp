#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace prunekit {

// Dense row-major tensor of f64. Plain value type: copy/move do what the
// containers do. Shape {} with one element is not used; scalars stay double.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<std::size_t> s, double v);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // Row-major coordinate access for the common ranks.
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    // Same data, new shape; element counts must match.
    Tensor reshaped(std::vector<std::size_t> s) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// Throws std::invalid_argument with a message naming `who` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* who);

}  // namespace prunekit
