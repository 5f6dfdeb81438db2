#include "xrtm/tensor_ops.hpp"

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/SpecialFunctions>

namespace xrtm::nn {

namespace {

template <class T>
void im2col(const T* in, Index channels, Index h, Index w, Index k, Index pad, Index ho, Index wo, RowMatrix<T>& col) {
    col.resize(channels * k * k, ho * wo);
    Index row = 0;
    for (Index ci = 0; ci < channels; ++ci) {
        const T* plane = in + ci * h * w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx, ++row) {
                T* dst = col.row(row).data();
                const Index x_begin = std::max<Index>(0, pad - kx);
                const Index x_end = std::min<Index>(wo, w + pad - kx);
                for (Index oy = 0; oy < ho; ++oy) {
                    T* out = dst + oy * wo;
                    const Index iy = oy + ky - pad;
                    if (iy < 0 || iy >= h || x_begin >= x_end) {
                        std::fill(out, out + wo, T(0));
                        continue;
                    }
                    std::fill(out, out + x_begin, T(0));
                    const T* src = plane + iy * w + (x_begin + kx - pad);
                    std::copy(src, src + (x_end - x_begin), out + x_begin);
                    std::fill(out + x_end, out + wo, T(0));
                }
            }
        }
    }
}

template <class T>
void col2im(const RowMatrix<T>& col, Index channels, Index h, Index w, Index k, Index pad, Index ho, Index wo, T* out) {
    std::fill(out, out + channels * h * w, T(0));
    Index row = 0;
    for (Index ci = 0; ci < channels; ++ci) {
        T* plane = out + ci * h * w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx, ++row) {
                const T* src_row = col.row(row).data();
                const Index x_begin = std::max<Index>(0, pad - kx);
                const Index x_end = std::min<Index>(wo, w + pad - kx);
                if (x_begin >= x_end) continue;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = plane + iy * w + (x_begin + kx - pad);
                    const T* src = src_row + oy * wo + x_begin;
                    for (Index i = 0; i < x_end - x_begin; ++i) dst[i] += src[i];
                }
            }
        }
    }
}

template <class T>
void check_conv(const Tensor4<T>& x, const ConvWeights<T>& p, Index pad) {
    if (x.c != p.in_channels) {
        fail(ErrorKind::Shape, "conv2d: input has " + std::to_string(x.c) + " channels, weights expect " +
                                   std::to_string(p.in_channels));
    }
    if (p.weight.rows() != p.out_channels || p.weight.cols() != p.in_channels * p.kernel * p.kernel ||
        p.bias.size() != p.out_channels) {
        fail(ErrorKind::Shape, "conv2d: weight/bias shape inconsistent");
    }
    if (x.h + 2 * pad - p.kernel + 1 <= 0 || x.w + 2 * pad - p.kernel + 1 <= 0) {
        fail(ErrorKind::Shape, "conv2d: kernel larger than padded input");
    }
}

}  // namespace

template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvWeights<T>& p, Index pad) {
    check_conv(x, p, pad);
    const Index ho = x.h + 2 * pad - p.kernel + 1;
    const Index wo = x.w + 2 * pad - p.kernel + 1;
    Tensor4<T> y(x.n, p.out_channels, ho, wo);
    RowMatrix<T> col;
    for (Index b = 0; b < x.n; ++b) {
        auto out = y.sample(b);
        if (p.kernel == 1 && pad == 0) {
            out.noalias() = p.weight * x.sample(b);
        } else {
            im2col(x.data.data() + b * x.c * x.plane(), x.c, x.h, x.w, p.kernel, pad, ho, wo, col);
            out.noalias() = p.weight * col;
        }
        out.colwise() += p.bias.matrix();
    }
    return y;
}

template <class T>
void conv2d_backward(const Tensor4<T>& x, const ConvWeights<T>& p, Index pad, const Tensor4<T>& dy, Tensor4<T>* dx,
                     RowMatrix<T>& grad_weight, Vector<T>& grad_bias) {
    check_conv(x, p, pad);
    const Index ho = x.h + 2 * pad - p.kernel + 1;
    const Index wo = x.w + 2 * pad - p.kernel + 1;
    if (dy.n != x.n || dy.c != p.out_channels || dy.h != ho || dy.w != wo) {
        fail(ErrorKind::Shape, "conv2d_backward: gradient shape " + shape_string(dy) + " mismatch");
    }
    if (dx != nullptr && !dx->same_shape(x)) *dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    const bool pointwise = p.kernel == 1 && pad == 0;
    RowMatrix<T> col, dcol;
    for (Index b = 0; b < x.n; ++b) {
        const auto g = dy.sample(b);
        grad_bias += g.rowwise().sum().array();
        if (pointwise) {
            grad_weight.noalias() += g * x.sample(b).transpose();
            if (dx != nullptr) dx->sample(b).noalias() = p.weight.transpose() * g;
            continue;
        }
        im2col(x.data.data() + b * x.c * x.plane(), x.c, x.h, x.w, p.kernel, pad, ho, wo, col);
        grad_weight.noalias() += g * col.transpose();
        if (dx != nullptr) {
            dcol.noalias() = p.weight.transpose() * g;
            col2im(dcol, x.c, x.h, x.w, p.kernel, pad, ho, wo, dx->data.data() + b * x.c * x.plane());
        }
    }
}

template <class T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_derivative(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    return cdf + x * pdf;
}

template <class T>
Tensor4<T> gelu_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    y.data = T(0.5) * x.data * (T(1) + (x.data * T(1.0 / std::numbers::sqrt2)).erf());
    return y;
}

template <class T>
Tensor4<T> gelu_backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
    if (!x.same_shape(dy)) fail(ErrorKind::Shape, "gelu_backward: shape mismatch");
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    const T inv_sqrt_2pi = T(1.0 / std::sqrt(2.0 * std::numbers::pi));
    dx.data = dy.data * (T(0.5) * (T(1) + (x.data * T(1.0 / std::numbers::sqrt2)).erf()) +
                         x.data * inv_sqrt_2pi * (T(-0.5) * x.data.square()).exp());
    return dx;
}

template <class T>
Tensor4<T> maxpool2x2_forward(const Tensor4<T>& x, std::vector<Index>& argmax) {
    if (x.h % 2 != 0 || x.w % 2 != 0) {
        fail(ErrorKind::Shape, "maxpool2x2: odd spatial dimensions " + shape_string(x));
    }
    const Index ho = x.h / 2, wo = x.w / 2;
    Tensor4<T> y(x.n, x.c, ho, wo);
    argmax.assign(static_cast<std::size_t>(y.size()), 0);
    Index out = 0;
    for (Index bc = 0; bc < x.n * x.c; ++bc) {
        const Index base = bc * x.h * x.w;
        for (Index oy = 0; oy < ho; ++oy) {
            for (Index ox = 0; ox < wo; ++ox, ++out) {
                Index best = base + 2 * oy * x.w + 2 * ox;
                T value = x.data[best];
                const Index candidates[3] = {best + 1, best + x.w, best + x.w + 1};
                for (const Index idx : candidates) {
                    if (x.data[idx] > value) {
                        value = x.data[idx];
                        best = idx;
                    }
                }
                y.data[out] = value;
                argmax[static_cast<std::size_t>(out)] = best;
            }
        }
    }
    return y;
}

template <class T>
Tensor4<T> maxpool2x2_backward(const Tensor4<T>& dy, const std::vector<Index>& argmax, Index n, Index c, Index h,
                               Index w) {
    if (static_cast<Index>(argmax.size()) != dy.size()) fail(ErrorKind::Shape, "maxpool2x2_backward: argmax size");
    Tensor4<T> dx(n, c, h, w);
    for (Index i = 0; i < dy.size(); ++i) dx.data[argmax[static_cast<std::size_t>(i)]] += dy.data[i];
    return dx;
}

template <class T>
Tensor4<T> convtranspose2x2_forward(const Tensor4<T>& x, const ConvTransposeWeights<T>& p) {
    if (x.c != p.in_channels || p.weight.rows() != p.in_channels || p.weight.cols() != 4 * p.out_channels ||
        p.bias.size() != p.out_channels) {
        fail(ErrorKind::Shape, "convtranspose2x2: channel mismatch for input " + shape_string(x));
    }
    Tensor4<T> y(x.n, p.out_channels, 2 * x.h, 2 * x.w);
    RowMatrix<T> all;
    for (Index b = 0; b < x.n; ++b) {
        all.noalias() = p.weight.transpose() * x.sample(b);
        for (Index co = 0; co < p.out_channels; ++co) {
            for (Index k = 0; k < 4; ++k) {
                const Index ky = k / 2, kx = k % 2;
                const T* src = all.row(co * 4 + k).data();
                for (Index iy = 0; iy < x.h; ++iy) {
                    for (Index ix = 0; ix < x.w; ++ix) {
                        y(b, co, 2 * iy + ky, 2 * ix + kx) = src[iy * x.w + ix] + p.bias[co];
                    }
                }
            }
        }
    }
    return y;
}

template <class T>
void convtranspose2x2_backward(const Tensor4<T>& x, const ConvTransposeWeights<T>& p, const Tensor4<T>& dy,
                               Tensor4<T>* dx, RowMatrix<T>& grad_weight, Vector<T>& grad_bias) {
    if (dy.n != x.n || dy.c != p.out_channels || dy.h != 2 * x.h || dy.w != 2 * x.w) {
        fail(ErrorKind::Shape, "convtranspose2x2_backward: gradient shape " + shape_string(dy));
    }
    if (dx != nullptr && !dx->same_shape(x)) *dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    RowMatrix<T> gathered(4 * p.out_channels, x.h * x.w);
    for (Index b = 0; b < x.n; ++b) {
        for (Index co = 0; co < p.out_channels; ++co) {
            T sum = 0;
            for (Index k = 0; k < 4; ++k) {
                const Index ky = k / 2, kx = k % 2;
                T* dst = gathered.row(co * 4 + k).data();
                for (Index iy = 0; iy < x.h; ++iy) {
                    for (Index ix = 0; ix < x.w; ++ix) {
                        const T g = dy(b, co, 2 * iy + ky, 2 * ix + kx);
                        dst[iy * x.w + ix] = g;
                        sum += g;
                    }
                }
            }
            grad_bias[co] += sum;
        }
        grad_weight.noalias() += x.sample(b) * gathered.transpose();
        if (dx != nullptr) dx->sample(b).noalias() = p.weight * gathered;
    }
}

template <class T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) {
        fail(ErrorKind::Shape, "concat_channels: " + shape_string(a) + " vs " + shape_string(b));
    }
    Tensor4<T> y(a.n, a.c + b.c, a.h, a.w);
    for (Index s = 0; s < a.n; ++s) {
        y.sample(s).topRows(a.c) = a.sample(s);
        y.sample(s).bottomRows(b.c) = b.sample(s);
    }
    return y;
}

template <class T>
void split_channels(const Tensor4<T>& dy, Index a_channels, Tensor4<T>& da, Tensor4<T>& db) {
    if (a_channels <= 0 || a_channels >= dy.c) fail(ErrorKind::Shape, "split_channels: bad split");
    da = Tensor4<T>(dy.n, a_channels, dy.h, dy.w);
    db = Tensor4<T>(dy.n, dy.c - a_channels, dy.h, dy.w);
    for (Index s = 0; s < dy.n; ++s) {
        da.sample(s) = dy.sample(s).topRows(a_channels);
        db.sample(s) = dy.sample(s).bottomRows(dy.c - a_channels);
    }
}

#define XRTM_INSTANTIATE(T)                                                                                    \
    template Tensor4<T> conv2d_forward(const Tensor4<T>&, const ConvWeights<T>&, Index);                       \
    template void conv2d_backward(const Tensor4<T>&, const ConvWeights<T>&, Index, const Tensor4<T>&,          \
                                  Tensor4<T>*, RowMatrix<T>&, Vector<T>&);                                     \
    template T gelu(T);                                                                                        \
    template T gelu_derivative(T);                                                                             \
    template Tensor4<T> gelu_forward(const Tensor4<T>&);                                                       \
    template Tensor4<T> gelu_backward(const Tensor4<T>&, const Tensor4<T>&);                                   \
    template Tensor4<T> maxpool2x2_forward(const Tensor4<T>&, std::vector<Index>&);                            \
    template Tensor4<T> maxpool2x2_backward(const Tensor4<T>&, const std::vector<Index>&, Index, Index, Index, \
                                            Index);                                                            \
    template Tensor4<T> convtranspose2x2_forward(const Tensor4<T>&, const ConvTransposeWeights<T>&);           \
    template void convtranspose2x2_backward(const Tensor4<T>&, const ConvTransposeWeights<T>&,                 \
                                            const Tensor4<T>&, Tensor4<T>*, RowMatrix<T>&, Vector<T>&);        \
    template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);                                 \
    template void split_channels(const Tensor4<T>&, Index, Tensor4<T>&, Tensor4<T>&);

XRTM_INSTANTIATE(float)
XRTM_INSTANTIATE(double)

#undef XRTM_INSTANTIATE

}  // namespace xrtm::nn
