#include "xrtm/fft.hpp"

#include <vector>

#include <unsupported/Eigen/FFT>

namespace xrtm {

namespace {

using Complex = std::complex<double>;

void transform_rows(ComplexSpectrum& a, bool inverse) {
    Eigen::FFT<double> fft;
    std::vector<Complex> in(static_cast<std::size_t>(a.cols())), out;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) in[static_cast<std::size_t>(c)] = a(r, c);
        if (inverse) fft.inv(out, in);
        else fft.fwd(out, in);
        for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = out[static_cast<std::size_t>(c)];
    }
}

void transform_cols(ComplexSpectrum& a, bool inverse) {
    Eigen::FFT<double> fft;
    std::vector<Complex> in(static_cast<std::size_t>(a.rows())), out;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        for (Eigen::Index r = 0; r < a.rows(); ++r) in[static_cast<std::size_t>(r)] = a(r, c);
        if (inverse) fft.inv(out, in);
        else fft.fwd(out, in);
        for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = out[static_cast<std::size_t>(r)];
    }
}

}  // namespace

ComplexSpectrum fft2(const ComplexSpectrum& spec) {
    ComplexSpectrum a = spec;
    transform_rows(a, false);
    transform_cols(a, false);
    return a;
}

ComplexSpectrum fft2(const Image2D& img) { return fft2(ComplexSpectrum(img.cast<Complex>())); }

ComplexSpectrum ifft2_complex(const ComplexSpectrum& spec) {
    ComplexSpectrum a = spec;
    transform_rows(a, true);
    transform_cols(a, true);
    return a;
}

Image2D ifft2(const ComplexSpectrum& spec) { return ifft2_complex(spec).real(); }

}  // namespace xrtm
