#pragma once

#include <array>
#include <string>

#include <Eigen/Dense>

#include "xrtm/error.hpp"

namespace xrtm::nn {

using Eigen::Index;

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Array<T, Eigen::Dynamic, 1>;

/// Dense NCHW tensor, row-major.
template <class T>
struct Tensor4 {
    Index n = 0, c = 0, h = 0, w = 0;
    Vector<T> data;

    Tensor4() = default;
    Tensor4(Index n_, Index c_, Index h_, Index w_) : n(n_), c(c_), h(h_), w(w_), data(Vector<T>::Zero(n_ * c_ * h_ * w_)) {}

    std::array<Index, 4> dims() const { return {n, c, h, w}; }
    Index size() const { return data.size(); }
    Index plane() const { return h * w; }

    T& operator()(Index b, Index ch, Index y, Index x) { return data[((b * c + ch) * h + y) * w + x]; }
    T operator()(Index b, Index ch, Index y, Index x) const { return data[((b * c + ch) * h + y) * w + x]; }

    /// Sample b as a (channels x h*w) matrix.
    Eigen::Map<RowMatrix<T>> sample(Index b) { return {data.data() + b * c * h * w, c, h * w}; }
    Eigen::Map<const RowMatrix<T>> sample(Index b) const { return {data.data() + b * c * h * w, c, h * w}; }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

inline std::string shape_string(Index n, Index c, Index h, Index w) {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

template <class T>
std::string shape_string(const Tensor4<T>& t) {
    return shape_string(t.n, t.c, t.h, t.w);
}

}  // namespace xrtm::nn
