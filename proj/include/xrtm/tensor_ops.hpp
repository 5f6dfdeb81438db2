#pragma once

#include <vector>

#include "xrtm/tensor.hpp"

namespace xrtm::nn {

/// Convolution weights in (out, in, k, k) order, flattened row-major into an
/// out x (in*k*k) matrix.
template <class T>
struct ConvWeights {
    Index out_channels = 0, in_channels = 0, kernel = 0;
    RowMatrix<T> weight;
    Vector<T> bias;
};

/// Transposed 2x2 stride-2 convolution weights in (in, out, 2, 2) order,
/// flattened into an in x (out*4) matrix.
template <class T>
struct ConvTransposeWeights {
    Index in_channels = 0, out_channels = 0;
    RowMatrix<T> weight;
    Vector<T> bias;
};

/// Cross-correlation with zero padding, stride 1.
template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvWeights<T>& p, Index pad);

/// Writes dx and accumulates into grad_weight / grad_bias. `dx` may be null
/// when the input gradient is not needed.
template <class T>
void conv2d_backward(const Tensor4<T>& x, const ConvWeights<T>& p, Index pad, const Tensor4<T>& dy, Tensor4<T>* dx,
                     RowMatrix<T>& grad_weight, Vector<T>& grad_bias);

/// x * Phi(x) with the exact error function.
template <class T>
Tensor4<T> gelu_forward(const Tensor4<T>& x);
/// dy * (Phi(x) + x * phi(x)).
template <class T>
Tensor4<T> gelu_backward(const Tensor4<T>& x, const Tensor4<T>& dy);

template <class T>
T gelu(T x);
template <class T>
T gelu_derivative(T x);

/// 2x2 max pooling. `argmax` receives, for every output element, the flat
/// input index that won (first in row-major window order on ties).
template <class T>
Tensor4<T> maxpool2x2_forward(const Tensor4<T>& x, std::vector<Index>& argmax);
template <class T>
Tensor4<T> maxpool2x2_backward(const Tensor4<T>& dy, const std::vector<Index>& argmax, Index n, Index c, Index h,
                               Index w);

template <class T>
Tensor4<T> convtranspose2x2_forward(const Tensor4<T>& x, const ConvTransposeWeights<T>& p);
template <class T>
void convtranspose2x2_backward(const Tensor4<T>& x, const ConvTransposeWeights<T>& p, const Tensor4<T>& dy,
                               Tensor4<T>* dx, RowMatrix<T>& grad_weight, Vector<T>& grad_bias);

/// Channel concatenation [a, b].
template <class T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
/// Splits a gradient of concat_channels back into its two parts.
template <class T>
void split_channels(const Tensor4<T>& dy, Index a_channels, Tensor4<T>& da, Tensor4<T>& db);

}  // namespace xrtm::nn
