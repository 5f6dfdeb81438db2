#include "xrtm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "xrtm/fft.hpp"

namespace xrtm {

namespace {

double sample_periodic(const Image2D& img, double y, double x) {
    const Eigen::Index h = img.rows();
    const Eigen::Index w = img.cols();
    const double fy0 = std::floor(y);
    const double fx0 = std::floor(x);
    const double ty = y - fy0;
    const double tx = x - fx0;
    auto wrap = [](long long i, Eigen::Index n) {
        const long long m = static_cast<long long>(n);
        return static_cast<Eigen::Index>(((i % m) + m) % m);
    };
    const Eigen::Index y0 = wrap(static_cast<long long>(fy0), h);
    const Eigen::Index x0 = wrap(static_cast<long long>(fx0), w);
    const Eigen::Index y1 = (y0 + 1) % h;
    const Eigen::Index x1 = (x0 + 1) % w;
    const double v00 = img(y0, x0);
    if (tx == 0.0 && ty == 0.0) return v00;
    const double top = (1.0 - tx) * v00 + tx * img(y0, x1);
    const double bottom = (1.0 - tx) * img(y1, x0) + tx * img(y1, x1);
    return (1.0 - ty) * top + ty * bottom;
}

/// Raised-cosine rise from 0 at -taper/2 to 1 at +taper/2 (0.5 at 0).
double taper_window(double s, double taper) {
    if (taper <= 0.0) return s >= 0.0 ? 1.0 : 0.0;
    if (s <= -0.5 * taper) return 0.0;
    if (s >= 0.5 * taper) return 1.0;
    return 0.5 * (1.0 - std::cos(std::numbers::pi * (s + 0.5 * taper) / taper));
}

/// Gaussian cross-section shifted and rescaled to reach exactly zero at 3 sigma.
double compact_gaussian(double d, double sigma) {
    const double cutoff = std::exp(-4.5);
    const double g = std::exp(-0.5 * d * d / (sigma * sigma));
    return std::max(0.0, (g - cutoff) / (1.0 - cutoff));
}

double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

}  // namespace

Eigen::Index registration_band_rows(Eigen::Index height) {
    return static_cast<Eigen::Index>(std::ceil(0.2 * static_cast<double>(height)));
}

Image2D gen_master_pattern(std::uint64_t seed, Eigen::Index height, Eigen::Index width, Band band,
                           double amplitude) {
    const double nyquist = static_cast<double>(std::min(height, width)) / 2.0;
    if (!(band.low > 0.0 && band.low < band.high && band.high < nyquist)) {
        fail(ErrorKind::Parameter, "band must satisfy 0 < low < high < min(h,w)/2");
    }
    if (amplitude < 0.0) fail(ErrorKind::Parameter, "amplitude must be non-negative");
    if (amplitude == 0.0) return Image2D::Zero(height, width);

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Image2D white(height, width);
    for (Eigen::Index i = 0; i < white.size(); ++i) white.data()[i] = normal(rng);

    ComplexSpectrum spec = fft2(white);
    for (Eigen::Index ky = 0; ky < height; ++ky) {
        for (Eigen::Index kx = 0; kx < width; ++kx) {
            const double r = frequency_radius(ky, kx, height, width);
            if (r < band.low || r > band.high) spec(ky, kx) = 0.0;
        }
    }
    Image2D pattern = ifft2(spec);
    pattern -= pattern.mean();
    const double rms = std::sqrt(pattern.square().mean());
    if (rms > 0.0) pattern *= amplitude / rms;
    return pattern;
}

ArtifactModel make_artifact_model(std::uint64_t seed, Eigen::Index height, Eigen::Index width, Band band,
                                  double amplitude) {
    return {gen_master_pattern(seed, height, width, band, amplitude), band, amplitude};
}

void validate(const DriftParams& drift, const DriftBounds& bounds) {
    if (!std::isfinite(drift.dx) || !std::isfinite(drift.dy) || std::abs(drift.dx) > bounds.max_shift ||
        std::abs(drift.dy) > bounds.max_shift) {
        fail(ErrorKind::Parameter, "drift shift outside bounds");
    }
    if (!(drift.magnification >= bounds.min_magnification && drift.magnification <= bounds.max_magnification)) {
        fail(ErrorKind::Parameter, "drift magnification outside bounds");
    }
    if (!(drift.intensity_scale > 0.0) || !std::isfinite(drift.intensity_scale)) {
        fail(ErrorKind::Parameter, "drift intensity_scale must be positive");
    }
}

DriftParams sample_drift(Rng& rng, const DriftRanges& ranges) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    DriftParams d;
    d.dx = ranges.max_shift * unit(rng);
    d.dy = ranges.max_shift * unit(rng);
    d.magnification = 1.0 + ranges.max_magnification_deviation * unit(rng);
    d.intensity_scale = 1.0 + ranges.max_intensity_deviation * unit(rng);
    return d;
}

Image2D drift_artifact(const ArtifactModel& model, const DriftParams& drift, const DriftBounds& bounds) {
    validate(drift, bounds);
    const Image2D& master = model.master_pattern;
    const double cy = 0.5 * static_cast<double>(master.rows() - 1);
    const double cx = 0.5 * static_cast<double>(master.cols() - 1);
    Image2D out(master.rows(), master.cols());
    for (Eigen::Index y = 0; y < master.rows(); ++y) {
        for (Eigen::Index x = 0; x < master.cols(); ++x) {
            const double sy = cy + (static_cast<double>(y) - cy - drift.dy) / drift.magnification;
            const double sx = cx + (static_cast<double>(x) - cx - drift.dx) / drift.magnification;
            out(y, x) = std::exp(drift.intensity_scale * sample_periodic(master, sy, sx));
        }
    }
    return out;
}

SignalPhantom gen_filament_map(std::uint64_t seed, Eigen::Index height, Eigen::Index width, int n_filaments,
                               const FilamentGeometry& g) {
    if (n_filaments < 1) fail(ErrorKind::Parameter, "n_filaments must be at least 1");
    if (!(g.width_sigma > 0.0) || !(g.min_length > 0.0) || g.max_length < g.min_length || g.contrast < 0.0) {
        fail(ErrorKind::Parameter, "invalid filament geometry");
    }
    const double h = static_cast<double>(height);
    const double w = static_cast<double>(width);
    const double span_lo = g.span_begin * w;
    const double span_hi = g.span_end * w;
    const double spacing = (span_hi - span_lo) / n_filaments;
    const double reach = 0.5 * g.taper + 3.0 * g.width_sigma;
    const double top_limit = static_cast<double>(registration_band_rows(height));
    const double base_y = h - 1.0 - g.base_margin;
    const double max_angle = g.max_angle_deg * std::numbers::pi / 180.0;

    if (spacing < g.min_spacing) {
        fail(ErrorKind::Geometry, "filaments cannot fit: spacing below min_spacing");
    }
    if (base_y + reach > h - 1.0 || base_y - g.max_length * std::cos(max_angle) - reach < top_limit) {
        std::ostringstream os;
        os << "filaments of length up to " << g.max_length << " cannot fit in a " << height << "x" << width
           << " image below the registration band";
        fail(ErrorKind::Geometry, os.str());
    }
    if (span_lo - g.max_length * std::sin(max_angle) - reach < 0.0 ||
        span_hi + g.max_length * std::sin(max_angle) + reach > w - 1.0) {
        fail(ErrorKind::Geometry, "filaments cannot fit horizontally");
    }

    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SignalPhantom out;
    out.map = Image2D::Ones(height, width);
    out.mask = Mask2D::Zero(height, width);
    Image2D deviation = Image2D::Zero(height, width);

    for (int i = 0; i < n_filaments; ++i) {
        FilamentTruth f;
        f.id = i + 1;
        f.base_x = span_lo + (i + 0.5) * spacing + (unit(rng) - 0.5) * 0.3 * spacing;
        f.base_y = base_y;
        const double angle = (2.0 * unit(rng) - 1.0) * max_angle;
        f.axis_x = std::sin(angle);
        f.axis_y = -std::cos(angle);
        f.length = g.min_length + unit(rng) * (g.max_length - g.min_length);
        f.tip_x = f.base_x + f.length * f.axis_x;
        f.tip_y = f.base_y + f.length * f.axis_y;
        f.width_sigma = g.width_sigma;
        f.contrast = g.contrast;
        const double flip = unit(rng);
        switch (g.polarity) {
            case PolarityMode::Dark: f.polarity = -1; break;
            case PolarityMode::Bright: f.polarity = 1; break;
            case PolarityMode::Mixed: f.polarity = flip < 0.5 ? -1 : 1; break;
        }
        out.filaments.push_back(f);

        if (g.contrast == 0.0) continue;
        const Eigen::Index y_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(std::min(f.base_y, f.tip_y) - reach - 1)));
        const Eigen::Index y_hi = std::min<Eigen::Index>(height - 1, static_cast<Eigen::Index>(std::ceil(std::max(f.base_y, f.tip_y) + reach + 1)));
        const Eigen::Index x_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(std::min(f.base_x, f.tip_x) - reach - 1)));
        const Eigen::Index x_hi = std::min<Eigen::Index>(width - 1, static_cast<Eigen::Index>(std::ceil(std::max(f.base_x, f.tip_x) + reach + 1)));
        for (Eigen::Index y = y_lo; y <= y_hi; ++y) {
            for (Eigen::Index x = x_lo; x <= x_hi; ++x) {
                const double rx = static_cast<double>(x) - f.base_x;
                const double ry = static_cast<double>(y) - f.base_y;
                const double s = rx * f.axis_x + ry * f.axis_y;
                const double d = -rx * f.axis_y + ry * f.axis_x;
                const double along = taper_window(s, g.taper) * taper_window(f.length - s, g.taper);
                const double across = compact_gaussian(d, g.width_sigma);
                const double v = along * across;
                if (v > 0.0) {
                    deviation(y, x) += f.polarity * g.contrast * v;
                    out.mask(y, x) = 1;
                }
            }
        }
    }
    out.map = (1.0 + deviation).max(0.05);
    return out;
}

SignalPhantom gen_shock_map(std::uint64_t seed, Eigen::Index height, Eigen::Index width, const ShockGeometry& g) {
    const double h = static_cast<double>(height);
    const double w = static_cast<double>(width);
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double cx = 0.5 * w + (unit(rng) - 0.5) * 0.4 * w;
    const double cy = h + (0.2 + 0.4 * unit(rng)) * h;
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double lobes = 3.0 + std::floor(3.0 * unit(rng));
    const double top_limit = static_cast<double>(registration_band_rows(height));

    auto front_radius = [&](double x, double y, double radius) {
        const double angle = std::atan2(y - cy, x - cx);
        return radius * (1.0 + g.front_ripple * std::sin(lobes * angle + phase));
    };
    auto covered_fraction = [&](double radius) {
        Eigen::Index n = 0;
        for (Eigen::Index y = 0; y < height; ++y)
            for (Eigen::Index x = 0; x < width; ++x) {
                const double xd = static_cast<double>(x), yd = static_cast<double>(y);
                if (std::hypot(xd - cx, yd - cy) < front_radius(xd, yd, radius)) ++n;
            }
        return static_cast<double>(n) / (h * w);
    };

    // Largest radius whose front stays below the registration band everywhere.
    const double radius_limit = (cy - top_limit) / (1.0 + std::abs(g.front_ripple));
    const double target = std::clamp(g.area_fraction, 0.0, 0.8);
    double lo = cy - h;
    double hi = radius_limit;
    if (covered_fraction(hi) <= target) {
        lo = hi;
    } else {
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (covered_fraction(mid) < target) lo = mid;
            else hi = mid;
        }
    }
    const double radius = lo;

    SignalPhantom out;
    out.map = Image2D::Ones(height, width);
    out.mask = Mask2D::Zero(height, width);
    if (g.contrast == 0.0) return out;
    for (Eigen::Index y = 0; y < height; ++y) {
        for (Eigen::Index x = 0; x < width; ++x) {
            const double xd = static_cast<double>(x), yd = static_cast<double>(y);
            const double depth = front_radius(xd, yd, radius) - std::hypot(xd - cx, yd - cy);
            if (depth <= 0.0) continue;
            const double ramp = smoothstep(depth / g.edge_width);
            const double interior = 0.6 + 0.4 * std::exp(-depth / g.thickness);
            out.map(y, x) = 1.0 - g.contrast * ramp * interior;
            out.mask(y, x) = 1;
        }
    }
    return out;
}

Image2D beam_envelope(Eigen::Index height, Eigen::Index width) {
    const double fwhm = 2.0 * static_cast<double>(width);
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double cy = 0.5 * static_cast<double>(height - 1);
    const double cx = 0.5 * static_cast<double>(width - 1);
    Image2D env(height, width);
    for (Eigen::Index y = 0; y < height; ++y) {
        for (Eigen::Index x = 0; x < width; ++x) {
            const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            env(y, x) = std::exp(-0.5 * r2 / (sigma * sigma));
        }
    }
    return env;
}

Image2D noise_realization(const Image2D& clean, std::uint64_t seed, const NoiseConfig& noise) {
    Image2D n = Image2D::Ones(clean.rows(), clean.cols());
    Rng rng(seed);
    if (noise.photons_per_unit > 0.0) {
        for (Eigen::Index i = 0; i < n.size(); ++i) {
            const double expected = noise.photons_per_unit * clean.data()[i];
            if (expected <= 0.0) continue;
            std::poisson_distribution<long long> poisson(expected);
            n.data()[i] = static_cast<double>(poisson(rng)) / expected;
        }
        return n;
    }
    if (noise.level <= 0.0) return n;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < n.size(); ++i) n.data()[i] = std::max(0.0, 1.0 + noise.level * normal(rng));
    return n;
}

GroundTruthBundle gen_bundle(const ArtifactModel& artifact, const DriftParams& drift_shot,
                             const DriftParams& drift_flat, double base_transmission, const SignalPhantom& signal,
                             std::uint64_t noise_seed_shot, std::uint64_t noise_seed_flat,
                             const NoiseConfig& noise) {
    if (!(base_transmission > 0.0 && base_transmission <= 1.0)) {
        fail(ErrorKind::Parameter, "base_transmission must lie in (0, 1]");
    }
    const Eigen::Index h = artifact.master_pattern.rows();
    const Eigen::Index w = artifact.master_pattern.cols();
    if (signal.map.rows() != h || signal.map.cols() != w) fail(ErrorKind::Shape, "signal map shape mismatch");

    GroundTruthBundle b;
    b.envelope = beam_envelope(h, w);
    b.base_transmission = base_transmission;
    b.signal_map = signal.map;
    b.signal_mask = signal.mask;
    b.filaments = signal.filaments;
    b.drift_shot = drift_shot;
    b.drift_flat = drift_flat;
    b.noise_seed_shot = noise_seed_shot;
    b.noise_seed_flat = noise_seed_flat;

    b.artifact_shot = drift_artifact(artifact, drift_shot);
    const Image2D clean_shot = b.envelope * base_transmission * b.signal_map * b.artifact_shot;
    b.noise_shot = noise_realization(clean_shot, noise_seed_shot, noise);
    b.shot = clean_shot * b.noise_shot;

    b.artifact_flat = drift_artifact(artifact, drift_flat);
    const Image2D clean_flat = b.envelope * b.artifact_flat;
    b.noise_flat = noise_realization(clean_flat, noise_seed_flat, noise);
    b.flat = clean_flat * b.noise_flat;
    return b;
}

GroundTruthBundle gen_cold_shot(const ArtifactModel& artifact, const DriftParams& drift, double base_transmission,
                                std::uint64_t noise_seed, const NoiseConfig& noise) {
    if (!(base_transmission > 0.0 && base_transmission <= 1.0)) {
        fail(ErrorKind::Parameter, "base_transmission must lie in (0, 1]");
    }
    const Eigen::Index h = artifact.master_pattern.rows();
    const Eigen::Index w = artifact.master_pattern.cols();
    GroundTruthBundle b;
    b.envelope = beam_envelope(h, w);
    b.base_transmission = base_transmission;
    b.signal_map = Image2D::Ones(h, w);
    b.signal_mask = Mask2D::Zero(h, w);
    b.drift_shot = drift;
    b.noise_seed_shot = noise_seed;
    b.artifact_shot = drift_artifact(artifact, drift);
    const Image2D clean = b.envelope * base_transmission * b.artifact_shot;
    b.noise_shot = noise_realization(clean, noise_seed, noise);
    b.shot = clean * b.noise_shot;
    return b;
}

Image2D gen_flat(const ArtifactModel& artifact, const DriftParams& drift, std::uint64_t noise_seed,
                 const NoiseConfig& noise) {
    return gen_cold_shot(artifact, drift, 1.0, noise_seed, noise).shot;
}

Image2D inject(const Image2D& cold, const Image2D& signal_map) {
    check_same_shape(cold, signal_map, "inject");
    return cold * signal_map;
}

}  // namespace xrtm
