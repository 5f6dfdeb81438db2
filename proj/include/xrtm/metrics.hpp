#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrtm/image.hpp"
#include "xrtm/phantom.hpp"

namespace xrtm {

double mse(const Image2D& a, const Image2D& b, const Roi& roi);
/// 10 log10(peak^2 / mse); +infinity when mse == 0.
double psnr(const Image2D& a, const Image2D& b, const Roi& roi, double peak = 1.0);

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Local SSIM with normalized Gaussian weights, evaluated at every window
/// position fully inside the ROI.
Image2D ssim_map(const Image2D& a, const Image2D& b, const Roi& roi, const SsimConfig& cfg = {});
double mssim(const Image2D& a, const Image2D& b, const Roi& roi, const SsimConfig& cfg = {});

struct FilamentSpec {
    int id = 0;
    double base_x = 0.0, base_y = 0.0;
    /// Unit direction from base to tip.
    double axis_x = 0.0, axis_y = -1.0;
    double width = 3.0;
    int polarity = -1;  ///< +1 bright, -1 dark
    /// Search range along the axis.
    double max_length = 80.0;
};

FilamentSpec spec_from_truth(const FilamentTruth& f, double width = 3.0, double search_margin = 20.0);

enum class EndpointRule { HalfPeakWalk, Extremum };

struct LengthConfig {
    EndpointRule rule = EndpointRule::HalfPeakWalk;
    double threshold_fraction = 0.5;
    /// Peak deviations at or below this are treated as absent.
    double noise_floor = 5e-3;
    double step = 0.25;
};

/// Lineout along the axis, averaged across `width`. Entry i is at s = i * step.
std::vector<double> filament_lineout(const Image2D& t, const FilamentSpec& spec, double step = 0.25);

double measure_filament_length(const Image2D& t, const FilamentSpec& spec, double background,
                               const LengthConfig& cfg = {});

/// 100 sqrt(mean(((m - t) / t)^2)).
double rmspe(const std::vector<double>& measured, const std::vector<double>& truth);

struct FilamentLength {
    int id = 0;
    std::optional<double> length;  ///< empty when not found
};

struct EvalReport {
    double mssim = 0.0;
    double psnr = 0.0;
    double mse = 0.0;
    double sigma_t_outside = 0.0;
    std::vector<FilamentLength> filament_lengths;
    std::optional<double> rmspe;
};

/// psnr is written as null when infinite; missing lengths as null.
nlohmann::json to_json(const EvalReport& r);
void write_lengths_csv(std::ostream& out, const std::vector<FilamentLength>& lengths,
                       const std::vector<double>& truth = {});

}  // namespace xrtm
