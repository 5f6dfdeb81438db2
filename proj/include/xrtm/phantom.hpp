#pragma once

#include <cstdint>
#include <vector>

#include "xrtm/image.hpp"
#include "xrtm/random.hpp"

namespace xrtm {

/// Spatial-frequency annulus in cycles per image.
struct Band {
    double low = 4.0;
    double high = 32.0;
};

/// Log-domain structured texture standing in for lens speckle.
struct ArtifactModel {
    Image2D master_pattern;
    Band band;
    double amplitude = 0.0;
};

struct DriftParams {
    double dx = 0.0;
    double dy = 0.0;
    double magnification = 1.0;
    double intensity_scale = 1.0;
};

struct DriftBounds {
    double max_shift = 10.0;
    double min_magnification = 0.9;
    double max_magnification = 1.1;
};

/// Ranges that random drifts are drawn from (uniform, symmetric).
struct DriftRanges {
    double max_shift = 3.0;
    double max_magnification_deviation = 0.02;
    double max_intensity_deviation = 0.1;
};

enum class PolarityMode { Mixed, Dark, Bright };

struct FilamentGeometry {
    double contrast = 0.3;
    double width_sigma = 1.5;
    double min_length = 30.0;
    double max_length = 50.0;
    /// Length of the raised-cosine taper; the amplitude is one half at both ends.
    double taper = 6.0;
    double max_angle_deg = 8.0;
    PolarityMode polarity = PolarityMode::Mixed;
    /// Distance between the bottom row and the filament bases.
    double base_margin = 8.0;
    double min_spacing = 8.0;
    /// Horizontal span used for the bases, as fractions of the width.
    double span_begin = 0.15;
    double span_end = 0.85;
};

/// Ground-truth record of one generated filament.
struct FilamentTruth {
    int id = 0;
    double base_x = 0.0, base_y = 0.0;
    double tip_x = 0.0, tip_y = 0.0;
    double axis_x = 0.0, axis_y = -1.0;
    double length = 0.0;
    double width_sigma = 0.0;
    double contrast = 0.0;
    int polarity = -1;  ///< +1 transmission enhancement, -1 deficit
};

struct ShockGeometry {
    double area_fraction = 0.3;
    double contrast = 0.3;
    double edge_width = 4.0;
    double thickness = 12.0;
    double front_ripple = 0.02;
};

/// A multiplicative signal map (1 = no signal) with its support.
struct SignalPhantom {
    Image2D map;
    Mask2D mask;
    std::vector<FilamentTruth> filaments;
};

/// A synthetic shot with its exact factorization:
/// shot = envelope * base_transmission * signal_map * artifact_shot * noise_shot.
/// The flat (when present) is envelope * artifact_flat * noise_flat.
struct GroundTruthBundle {
    Image2D shot;
    Image2D flat;
    Image2D envelope;
    Image2D artifact_shot;
    Image2D artifact_flat;
    Image2D noise_shot;
    Image2D noise_flat;
    Image2D signal_map;
    Mask2D signal_mask;
    double base_transmission = 1.0;
    DriftParams drift_shot;
    DriftParams drift_flat;
    std::uint64_t noise_seed_shot = 0;
    std::uint64_t noise_seed_flat = 0;
    std::vector<FilamentTruth> filaments;
};

struct NoiseConfig {
    double level = 0.01;
    /// Photon (Poisson) noise instead of multiplicative Gaussian when > 0:
    /// expected counts at unit intensity.
    double photons_per_unit = 0.0;
};

/// Band-limited filtered white noise, zero mean, RMS = amplitude.
Image2D gen_master_pattern(std::uint64_t seed, Eigen::Index height, Eigen::Index width, Band band,
                           double amplitude);
ArtifactModel make_artifact_model(std::uint64_t seed, Eigen::Index height, Eigen::Index width, Band band,
                                  double amplitude);

void validate(const DriftParams& drift, const DriftBounds& bounds = {});
DriftParams sample_drift(Rng& rng, const DriftRanges& ranges);

/// exp(intensity_scale * master(resampled)) with translation and central
/// magnification; bilinear with periodic wrap.
Image2D drift_artifact(const ArtifactModel& model, const DriftParams& drift, const DriftBounds& bounds = {});

SignalPhantom gen_filament_map(std::uint64_t seed, Eigen::Index height, Eigen::Index width, int n_filaments,
                               const FilamentGeometry& geometry = {});
SignalPhantom gen_shock_map(std::uint64_t seed, Eigen::Index height, Eigen::Index width,
                            const ShockGeometry& geometry = {});

/// Broad Gaussian beam profile, FWHM twice the image width, peak 1.
Image2D beam_envelope(Eigen::Index height, Eigen::Index width);

/// Multiplicative noise realization for a clean image.
Image2D noise_realization(const Image2D& clean, std::uint64_t seed, const NoiseConfig& noise);

GroundTruthBundle gen_cold_shot(const ArtifactModel& artifact, const DriftParams& drift, double base_transmission,
                                std::uint64_t noise_seed, const NoiseConfig& noise = {});

/// A shot/flat pair. The signal is any multiplicative map (all ones for a cold shot).
GroundTruthBundle gen_bundle(const ArtifactModel& artifact, const DriftParams& drift_shot,
                             const DriftParams& drift_flat, double base_transmission, const SignalPhantom& signal,
                             std::uint64_t noise_seed_shot, std::uint64_t noise_seed_flat,
                             const NoiseConfig& noise = {});

Image2D gen_flat(const ArtifactModel& artifact, const DriftParams& drift, std::uint64_t noise_seed,
                 const NoiseConfig& noise = {});

/// I_syn = I_cold * S.
Image2D inject(const Image2D& cold, const Image2D& signal_map);

/// Rows [0, ceil(0.2 h)) are kept free of signal for registration.
Eigen::Index registration_band_rows(Eigen::Index height);

}  // namespace xrtm
