#include "xrtm/fourier_filter.hpp"

#include <algorithm>
#include <vector>

namespace xrtm {

void validate(const FourierFilterConfig& cfg, Eigen::Index height, Eigen::Index width) {
    const double limit = static_cast<double>(std::min(height, width)) / 2.0;
    if (cfg.lowfreq_radius <= 0 || static_cast<double>(cfg.lowfreq_radius) >= limit) {
        fail(ErrorKind::Parameter, "lowfreq_radius must lie in (0, min(h,w)/2)");
    }
    if (!(cfg.magnitude_percentile > 0.0 && cfg.magnitude_percentile < 100.0)) {
        fail(ErrorKind::Parameter, "magnitude_percentile must lie in (0, 100)");
    }
}

Eigen::Index apply_lowfreq_mask(ComplexSpectrum& spec, int radius) {
    Eigen::Index zeroed = 0;
    for (Eigen::Index ky = 0; ky < spec.rows(); ++ky) {
        for (Eigen::Index kx = 0; kx < spec.cols(); ++kx) {
            if (frequency_radius(ky, kx, spec.rows(), spec.cols()) <= radius) {
                spec(ky, kx) = 0.0;
                ++zeroed;
            }
        }
    }
    return zeroed;
}

Image2D filter_image(const Image2D& img, const FourierFilterConfig& cfg,
                     FourierFilterDiagnostics* diagnostics) {
    const Eigen::Index h = img.rows();
    const Eigen::Index w = img.cols();
    validate(cfg, h, w);

    const ComplexSpectrum original = fft2(img);
    ComplexSpectrum spec = original;
    FourierFilterDiagnostics diag;
    diag.lowfreq_zeroed = apply_lowfreq_mask(spec, cfg.lowfreq_radius);

    // Conjugate bins are decided together on their mean magnitude so the
    // spectrum stays Hermitian.
    const ComplexSpectrum& source = cfg.percentile_after_mask ? spec : original;
    Image2D pair_magnitude(h, w);
    for (Eigen::Index ky = 0; ky < h; ++ky) {
        for (Eigen::Index kx = 0; kx < w; ++kx) {
            const Eigen::Index cy = (h - ky) % h;
            const Eigen::Index cx = (w - kx) % w;
            pair_magnitude(ky, kx) = 0.5 * (std::abs(source(ky, kx)) + std::abs(source(cy, cx)));
        }
    }

    std::vector<double> candidates;
    candidates.reserve(static_cast<std::size_t>(img.size()));
    for (Eigen::Index ky = 0; ky < h; ++ky) {
        for (Eigen::Index kx = 0; kx < w; ++kx) {
            const bool in_dc = frequency_radius(ky, kx, h, w) <= cfg.lowfreq_radius;
            if (cfg.exclude_dc_region_from_threshold) {
                if (in_dc) continue;
                if (cfg.percentile_after_mask && pair_magnitude(ky, kx) == 0.0) continue;
            }
            candidates.push_back(pair_magnitude(ky, kx));
        }
    }
    if (!candidates.empty()) {
        diag.threshold = percentile(candidates, cfg.magnitude_percentile);
        for (Eigen::Index ky = 0; ky < h; ++ky) {
            for (Eigen::Index kx = 0; kx < w; ++kx) {
                if (spec(ky, kx) != 0.0 && pair_magnitude(ky, kx) > diag.threshold) {
                    spec(ky, kx) = 0.0;
                    ++diag.threshold_zeroed;
                }
            }
        }
    }

    const ComplexSpectrum back = ifft2_complex(spec);
    Image2D filtered = back.real();
    const double scale = std::max(filtered.abs().maxCoeff(), 1e-300);
    diag.imag_residue = back.imag().abs().maxCoeff() / scale;
    filtered += img.mean() - filtered.mean();
    if (diagnostics != nullptr) *diagnostics = diag;
    return filtered;
}

Image2D filter_and_reconstruct(const Image2D& shot, const Image2D& flat, const FourierFilterConfig& cfg,
                               double floor) {
    check_same_shape(shot, flat, "filter_and_reconstruct");
    return reconstruct_transmission(filter_image(shot, cfg), filter_image(flat, cfg), floor);
}

}  // namespace xrtm
