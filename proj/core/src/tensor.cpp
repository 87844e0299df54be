#include "prunekit/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace prunekit {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) {
        throw std::invalid_argument("Tensor: data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape.size()) {
        throw std::invalid_argument("Tensor::dim: axis " + std::to_string(i) + " out of range for " + shape_str());
    }
    return shape[i];
}

Tensor Tensor::reshaped(std::vector<std::size_t> s) const {
    if (shape_numel(s) != data.size()) {
        throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace prunekit
