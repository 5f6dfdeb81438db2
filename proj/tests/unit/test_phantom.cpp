#include <cmath>

#include "support.hpp"
#include "xrtm/fft.hpp"
#include "xrtm/phantom.hpp"

using namespace xrtm;

namespace {

double periodic_bilinear(const Image2D& img, double y, double x) {
    const double h = static_cast<double>(img.rows()), w = static_cast<double>(img.cols());
    y = std::fmod(std::fmod(y, h) + h, h);
    x = std::fmod(std::fmod(x, w) + w, w);
    const auto y0 = static_cast<Eigen::Index>(std::floor(y)), x0 = static_cast<Eigen::Index>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    const auto y1 = (y0 + 1) % img.rows(), x1 = (x0 + 1) % img.cols();
    return (1 - fy) * ((1 - fx) * img(y0, x0) + fx * img(y0, x1)) + fy * ((1 - fx) * img(y1, x0) + fx * img(y1, x1));
}

}  // namespace

TEST_CASE("master pattern is band limited with the requested rms") {
    const Image2D p = gen_master_pattern(42, 128, 128, {4.0, 32.0}, 0.05);
    CHECK(std::abs(p.mean()) < 1e-9);
    CHECK(std::sqrt(p.square().mean()) == doctest::Approx(0.05).epsilon(0.02));

    const ComplexSpectrum s = fft2(p);
    double inside = 0.0, total = 0.0;
    for (Eigen::Index ky = 0; ky < 128; ++ky) {
        for (Eigen::Index kx = 0; kx < 128; ++kx) {
            const double e = std::norm(s(ky, kx));
            const double r = frequency_radius(ky, kx, 128, 128);
            total += e;
            if (r >= 4.0 && r <= 32.0) inside += e;
        }
    }
    CHECK(inside / total >= 0.99);

    CHECK((gen_master_pattern(1, 32, 32, {2.0, 8.0}, 0.0) == 0.0).all());
    CHECK((gen_master_pattern(9, 32, 32, {2.0, 8.0}, 0.1) == gen_master_pattern(9, 32, 32, {2.0, 8.0}, 0.1)).all());
    CHECK_ERROR_KIND(gen_master_pattern(1, 32, 32, {8.0, 2.0}, 0.1), ErrorKind::Parameter);
}

TEST_CASE("drift resampling") {
    const ArtifactModel m = make_artifact_model(5, 64, 64, {3.0, 16.0}, 0.05);
    CHECK(((drift_artifact(m, {}) - m.master_pattern.exp()).abs() < 1e-15).all());

    const Image2D shifted = drift_artifact(m, {3.0, 0.0, 1.0, 1.0});
    CHECK(((shifted.log() - circshift(m.master_pattern, 3, 0)).abs() < 1e-12).all());

    const DriftParams d{0.7, -1.3, 1.02, 1.05};
    const Image2D mag = drift_artifact(m, d);
    const double c = 31.5;
    double worst = 0.0;
    for (Eigen::Index y = 0; y < 64; ++y) {
        for (Eigen::Index x = 0; x < 64; ++x) {
            const double v = std::exp(1.05 * periodic_bilinear(m.master_pattern, c + (y - c + 1.3) / 1.02,
                                                                c + (x - c - 0.7) / 1.02));
            worst = std::max(worst, std::abs(v - mag(y, x)));
        }
    }
    CHECK(worst < 1e-12);

    CHECK_ERROR_KIND(drift_artifact(m, {11.0, 0.0, 1.0, 1.0}), ErrorKind::Parameter);
    CHECK_ERROR_KIND(drift_artifact(m, {0.0, 0.0, 1.2, 1.0}), ErrorKind::Parameter);
}

TEST_CASE("filament map geometry") {
    FilamentGeometry g;
    const SignalPhantom s = gen_filament_map(17, 128, 128, 6, g);
    REQUIRE(s.filaments.size() == 6);
    const Eigen::Index band = registration_band_rows(128);
    CHECK(band == 26);
    CHECK((s.mask.topRows(band) == 0).all());
    for (const auto& f : s.filaments) {
        CHECK(std::hypot(f.tip_x - f.base_x, f.tip_y - f.base_y) == doctest::Approx(f.length).epsilon(1e-12));
        CHECK(f.length >= g.min_length);
        CHECK(f.length <= g.max_length);
        CHECK((f.polarity == 1 || f.polarity == -1));
    }
    // the map is one exactly off the support
    for (Eigen::Index i = 0; i < s.map.size(); ++i) {
        if (s.mask.data()[i] == 0) CHECK(s.map.data()[i] == 1.0);
    }

    g.contrast = 0.0;
    const SignalPhantom flat = gen_filament_map(17, 128, 128, 1, g);
    CHECK((flat.map == 1.0).all());
    CHECK((flat.mask == 0).all());
    CHECK_ERROR_KIND(gen_filament_map(1, 128, 128, 0, g), ErrorKind::Parameter);
    CHECK_ERROR_KIND(gen_filament_map(1, 32, 32, 6, FilamentGeometry{}), ErrorKind::Geometry);
}

TEST_CASE("shock map area") {
    ShockGeometry g;
    g.area_fraction = 0.3;
    for (std::uint64_t seed : {1, 2, 3}) {
        const SignalPhantom s = gen_shock_map(seed, 128, 128, g);
        const double frac = static_cast<double>((s.mask != 0).count()) / (128.0 * 128.0);
        CHECK(frac >= 0.25);
        CHECK(frac <= 0.35);
        CHECK((s.mask.topRows(registration_band_rows(128)) == 0).all());
        CHECK((s.map == gen_shock_map(seed, 128, 128, g).map).all());
    }
    g.contrast = 0.0;
    CHECK((gen_shock_map(4, 64, 64, g).map == 1.0).all());
}

TEST_CASE("bundles factor exactly") {
    const ArtifactModel m = make_artifact_model(8, 64, 64, {3.0, 16.0}, 0.05);
    const SignalPhantom sig = gen_filament_map(3, 64, 64, 3, FilamentGeometry{0.3, 1.5, 12.0, 20.0, 4.0, 8.0,
                                                                              PolarityMode::Mixed, 8.0, 8.0, 0.2, 0.8});
    const GroundTruthBundle b = gen_bundle(m, {1.0, -0.5, 1.01, 0.95}, {-2.0, 1.0, 0.99, 1.05}, 0.42, sig, 11, 12);
    const Image2D shot_noise = b.shot / (b.envelope * b.base_transmission * b.signal_map * b.artifact_shot);
    CHECK((((shot_noise - b.noise_shot) / b.noise_shot).abs() < 1e-10).all());
    const Image2D flat_noise = b.flat / (b.envelope * b.artifact_flat);
    CHECK((((flat_noise - b.noise_flat) / b.noise_flat).abs() < 1e-10).all());
    CHECK(((b.artifact_shot - drift_artifact(m, b.drift_shot)).abs() == 0.0).all());
    CHECK(((b.artifact_flat - drift_artifact(m, b.drift_flat)).abs() == 0.0).all());

    // the same seeds reproduce the bundle
    const GroundTruthBundle again = gen_bundle(m, b.drift_shot, b.drift_flat, 0.42, sig, 11, 12);
    CHECK((again.shot == b.shot).all());
    CHECK((again.flat == b.flat).all());
}

TEST_CASE("noiseless transmission recovers the base value") {
    const ArtifactModel m = make_artifact_model(8, 64, 64, {3.0, 16.0}, 0.05);
    SignalPhantom none{Image2D::Ones(64, 64), Mask2D::Zero(64, 64), {}};
    const GroundTruthBundle b = gen_bundle(m, {}, {}, 0.42, none, 1, 2, NoiseConfig{0.0, 0.0});
    const Image2D t = b.shot / b.flat;
    CHECK(t.mean() == doctest::Approx(0.42).epsilon(0.01));

    const GroundTruthBundle cold = gen_cold_shot(m, {}, 1.0, 5, NoiseConfig{0.0, 0.0});
    CHECK(((cold.shot - beam_envelope(64, 64) * m.master_pattern.exp()).abs() < 1e-15).all());
    const GroundTruthBundle other = gen_cold_shot(m, {1.0, 0.0, 1.0, 1.0}, 1.0, 5, NoiseConfig{0.0, 0.0});
    CHECK((other.artifact_shot - cold.artifact_shot).matrix().norm() > 0.0);
}

TEST_CASE("envelope and injection") {
    const Image2D env = beam_envelope(64, 64);
    CHECK(env.maxCoeff() <= 1.0);
    // half maximum one image width from the centre
    const double r2 = 2 * 31.5 * 31.5;
    CHECK(env(0, 0) == doctest::Approx(std::pow(2.0, -r2 / (64.0 * 64.0))));
    CHECK(env.maxCoeff() > 0.999);
    const Image2D cold = Image2D::Constant(4, 4, 2.0);
    CHECK((inject(cold, Image2D::Constant(4, 4, 0.5)) == 1.0).all());
    CHECK((inject(cold, Image2D::Ones(4, 4)) == cold).all());
    CHECK_ERROR_KIND(inject(cold, Image2D::Ones(3, 4)), ErrorKind::Shape);
}
