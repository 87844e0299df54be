#pragma once

// Internal tensor/statistics (de)serialization shared by the binary formats.

#include "prunekit/batchnorm.hpp"
#include "prunekit/tensor.hpp"
#include "wire.hpp"

namespace prunekit::wire {

inline void put_tensor(Writer& w, const Tensor& t) {
    w.u64(t.rank());
    for (std::size_t d : t.shape) w.u64(d);
    for (double v : t.data) w.f64(v);
}

inline Tensor get_tensor(Reader& r) {
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw DataError(r.who + ": implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(r.u64());
        numel *= shape[i];
    }
    r.need(numel * 8);
    Tensor t(shape);
    for (std::size_t i = 0; i < numel; ++i) t.data[i] = r.f64();
    return t;
}

inline Tensor get_tensor_checked(Reader& r, const std::vector<std::size_t>& expect) {
    Tensor t = get_tensor(r);
    if (t.shape != expect) throw DataError(r.who + ": tensor shape does not match the declared layout");
    return t;
}

inline void put_norm(Writer& w, const BatchNormState& st) {
    put_tensor(w, st.gamma);
    put_tensor(w, st.beta);
    put_tensor(w, st.running_mean);
    put_tensor(w, st.running_var);
    w.f64(st.eps);
    w.f64(st.momentum);
}

inline BatchNormState get_norm(Reader& r, std::size_t channels) {
    BatchNormState st;
    const std::vector<std::size_t> shape{channels};
    st.gamma = get_tensor_checked(r, shape);
    st.beta = get_tensor_checked(r, shape);
    st.running_mean = get_tensor_checked(r, shape);
    st.running_var = get_tensor_checked(r, shape);
    st.eps = r.f64();
    st.momentum = r.f64();
    return st;
}

}  // namespace prunekit::wire
