#pragma once

#include "xrtm/fft.hpp"
#include "xrtm/image.hpp"

namespace xrtm {

struct FourierFilterConfig {
    /// Coefficients within this DC-centred radius (index units) are zeroed.
    int lowfreq_radius = 20;
    double magnitude_percentile = 99.5;
    bool exclude_dc_region_from_threshold = true;
    /// Percentile taken over the spectrum after the low-frequency mask. When
    /// false it is taken over the unmasked spectrum.
    bool percentile_after_mask = true;
};

struct FourierFilterDiagnostics {
    double threshold = 0.0;
    Eigen::Index lowfreq_zeroed = 0;
    Eigen::Index threshold_zeroed = 0;
    /// max |imag| of the inverse transform divided by max |value|.
    double imag_residue = 0.0;
};

void validate(const FourierFilterConfig& cfg, Eigen::Index height, Eigen::Index width);

/// Zeroes |k| <= radius in place. Returns the number of zeroed bins.
Eigen::Index apply_lowfreq_mask(ComplexSpectrum& spec, int radius);

Image2D filter_image(const Image2D& img, const FourierFilterConfig& cfg,
                     FourierFilterDiagnostics* diagnostics = nullptr);

/// reconstruct_transmission(filter_image(shot), filter_image(flat)).
Image2D filter_and_reconstruct(const Image2D& shot, const Image2D& flat, const FourierFilterConfig& cfg,
                               double floor = kDefaultDivisionFloor);

}  // namespace xrtm
