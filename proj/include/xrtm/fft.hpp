#pragma once

#include <complex>

#include "xrtm/image.hpp"

namespace xrtm {

using ComplexSpectrum =
    Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unnormalized forward 2-D DFT (numpy convention, DC at (0,0)).
ComplexSpectrum fft2(const Image2D& img);
ComplexSpectrum fft2(const ComplexSpectrum& spec);
/// Inverse 2-D DFT including the 1/N factor.
ComplexSpectrum ifft2_complex(const ComplexSpectrum& spec);
/// Real part of the inverse transform.
Image2D ifft2(const ComplexSpectrum& spec);

/// Signed frequency index of bin k along an axis of length n (fftfreq * n).
inline double signed_frequency(Eigen::Index k, Eigen::Index n) {
    return static_cast<double>(k <= n / 2 ? k : k - n);
}

/// Distance of bin (ky, kx) from DC in index units.
inline double frequency_radius(Eigen::Index ky, Eigen::Index kx, Eigen::Index h, Eigen::Index w) {
    const double fy = signed_frequency(ky, h);
    const double fx = signed_frequency(kx, w);
    return std::sqrt(fy * fy + fx * fx);
}

}  // namespace xrtm
