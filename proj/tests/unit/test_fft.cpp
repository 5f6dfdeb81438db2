#include <cmath>
#include <complex>
#include <numbers>

#include "support.hpp"
#include "xrtm/fft.hpp"

using namespace xrtm;

namespace {

ComplexSpectrum brute_dft(const Image2D& img) {
    const Eigen::Index h = img.rows(), w = img.cols();
    ComplexSpectrum out(h, w);
    for (Eigen::Index ky = 0; ky < h; ++ky) {
        for (Eigen::Index kx = 0; kx < w; ++kx) {
            std::complex<double> acc = 0.0;
            for (Eigen::Index y = 0; y < h; ++y) {
                for (Eigen::Index x = 0; x < w; ++x) {
                    const double ph = -2.0 * std::numbers::pi * (double(ky * y) / h + double(kx * x) / w);
                    acc += img(y, x) * std::polar(1.0, ph);
                }
            }
            out(ky, kx) = acc;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fft2 matches a direct DFT") {
    for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{7, 5}}) {
        const Image2D img = test::random_image(h, w, 100 + h * w);
        const ComplexSpectrum a = fft2(img);
        const ComplexSpectrum b = brute_dft(img);
        CHECK((a - b).abs().maxCoeff() < 1e-10);
        const Image2D back = ifft2(a);
        CHECK((back - img).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("frequency indexing") {
    CHECK(signed_frequency(0, 8) == 0.0);
    CHECK(signed_frequency(4, 8) == 4.0);
    CHECK(signed_frequency(5, 8) == -3.0);
    CHECK(signed_frequency(3, 7) == 3.0);
    CHECK(signed_frequency(4, 7) == -3.0);
    CHECK(frequency_radius(7, 1, 8, 8) == doctest::Approx(std::sqrt(2.0)));

    Image2D delta = Image2D::Zero(8, 8);
    delta(0, 0) = 1.0;
    CHECK(((fft2(delta).abs() - 1.0).abs() < 1e-15).all());
}
