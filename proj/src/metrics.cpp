#include "xrtm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace xrtm {

namespace {

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
    Eigen::VectorXd k(size);
    const double c = 0.5 * (size - 1);
    for (int i = 0; i < size; ++i) k[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    return k / k.sum();
}

/// Separable valid-mode filtering.
Image2D filter_valid(const Image2D& img, const Eigen::VectorXd& k) {
    const Eigen::Index n = k.size();
    const Eigen::Index h = img.rows() - n + 1;
    const Eigen::Index w = img.cols() - n + 1;
    Image2D rows = Image2D::Zero(img.rows(), w);
    for (Eigen::Index i = 0; i < n; ++i) rows += k[i] * img.middleCols(i, w);
    Image2D out = Image2D::Zero(h, w);
    for (Eigen::Index i = 0; i < n; ++i) out += k[i] * rows.middleRows(i, h);
    return out;
}

double bilinear_clamped(const Image2D& img, double y, double x) {
    const double ymax = static_cast<double>(img.rows() - 1);
    const double xmax = static_cast<double>(img.cols() - 1);
    y = std::clamp(y, 0.0, ymax);
    x = std::clamp(x, 0.0, xmax);
    const auto y0 = static_cast<Eigen::Index>(std::floor(y));
    const auto x0 = static_cast<Eigen::Index>(std::floor(x));
    const Eigen::Index y1 = std::min(y0 + 1, img.rows() - 1);
    const Eigen::Index x1 = std::min(x0 + 1, img.cols() - 1);
    const double ty = y - static_cast<double>(y0);
    const double tx = x - static_cast<double>(x0);
    return (1 - ty) * ((1 - tx) * img(y0, x0) + tx * img(y0, x1)) + ty * ((1 - tx) * img(y1, x0) + tx * img(y1, x1));
}

}  // namespace

double mse(const Image2D& a, const Image2D& b, const Roi& roi) {
    check_same_shape(a, b, "mse");
    check_roi(roi, a.rows(), a.cols());
    return (crop(a, roi) - crop(b, roi)).square().mean();
}

double psnr(const Image2D& a, const Image2D& b, const Roi& roi, double peak) {
    const double e = mse(a, b, roi);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / e);
}

Image2D ssim_map(const Image2D& a, const Image2D& b, const Roi& roi, const SsimConfig& cfg) {
    check_same_shape(a, b, "ssim");
    check_roi(roi, a.rows(), a.cols());
    if (cfg.window < 1 || !(cfg.sigma > 0.0)) fail(ErrorKind::Parameter, "ssim: invalid window");
    if (roi.width < cfg.window || roi.height < cfg.window) {
        fail(ErrorKind::Shape, "ssim: ROI smaller than the " + std::to_string(cfg.window) + "-pixel window");
    }
    const Image2D x = crop(a, roi);
    const Image2D y = crop(b, roi);
    const Eigen::VectorXd k = gaussian_kernel(cfg.window, cfg.sigma);
    const Image2D mx = filter_valid(x, k);
    const Image2D my = filter_valid(y, k);
    const Image2D sxx = filter_valid(x * x, k) - mx * mx;
    const Image2D syy = filter_valid(y * y, k) - my * my;
    const Image2D sxy = filter_valid(x * y, k) - mx * my;
    const double c1 = std::pow(cfg.k1 * cfg.data_range, 2);
    const double c2 = std::pow(cfg.k2 * cfg.data_range, 2);
    return ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
}

double mssim(const Image2D& a, const Image2D& b, const Roi& roi, const SsimConfig& cfg) {
    return ssim_map(a, b, roi, cfg).mean();
}

FilamentSpec spec_from_truth(const FilamentTruth& f, double width, double search_margin) {
    FilamentSpec s;
    s.id = f.id;
    s.base_x = f.base_x;
    s.base_y = f.base_y;
    s.axis_x = f.axis_x;
    s.axis_y = f.axis_y;
    s.width = width;
    s.polarity = f.polarity;
    s.max_length = f.length + search_margin;
    return s;
}

std::vector<double> filament_lineout(const Image2D& t, const FilamentSpec& spec, double step) {
    const double norm = std::hypot(spec.axis_x, spec.axis_y);
    if (!(norm > 0.0) || !(step > 0.0) || !(spec.max_length > 0.0)) fail(ErrorKind::Parameter, "lineout: invalid spec");
    if (spec.width < 1.0) fail(ErrorKind::Parameter, "lineout: width must be at least 1");
    const double ax = spec.axis_x / norm;
    const double ay = spec.axis_y / norm;
    const double tip_x = spec.base_x + spec.max_length * ax;
    const double tip_y = spec.base_y + spec.max_length * ay;
    const double w = static_cast<double>(t.cols() - 1);
    const double h = static_cast<double>(t.rows() - 1);
    auto inside = [&](double x, double y) { return x >= 0.0 && x <= w && y >= 0.0 && y <= h; };
    if (!inside(spec.base_x, spec.base_y) || !inside(tip_x, tip_y)) {
        fail(ErrorKind::Geometry, "lineout: filament axis leaves the image");
    }
    // Perpendicular offsets spaced one pixel apart, centred on the axis.
    const int across = std::max(1, static_cast<int>(std::lround(spec.width)));
    const auto n = static_cast<std::size_t>(std::floor(spec.max_length / step)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) * step;
        double sum = 0.0;
        for (int j = 0; j < across; ++j) {
            const double d = j - 0.5 * (across - 1);
            sum += bilinear_clamped(t, spec.base_y + s * ay + d * ax, spec.base_x + s * ax - d * ay);
        }
        out[i] = sum / across;
    }
    return out;
}

double measure_filament_length(const Image2D& t, const FilamentSpec& spec, double background, const LengthConfig& cfg) {
    if (spec.polarity != 1 && spec.polarity != -1) fail(ErrorKind::Parameter, "length: polarity must be +1 or -1");
    const std::vector<double> line = filament_lineout(t, spec, cfg.step);
    std::vector<double> dev(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) dev[i] = spec.polarity * (line[i] - background);
    const auto peak_it = std::max_element(dev.begin(), dev.end());
    const double peak = *peak_it;
    if (!(peak > cfg.noise_floor)) fail(ErrorKind::NotFound, "filament " + std::to_string(spec.id) + ": no extremum above the noise floor");
    const auto k = static_cast<std::size_t>(peak_it - dev.begin());
    if (cfg.rule == EndpointRule::Extremum) return static_cast<double>(k) * cfg.step;

    const double threshold = cfg.threshold_fraction * peak;
    for (std::size_t i = k + 1; i < dev.size(); ++i) {
        if (dev[i] < threshold) {
            const double frac = (dev[i - 1] - threshold) / (dev[i - 1] - dev[i]);
            return (static_cast<double>(i - 1) + frac) * cfg.step;
        }
    }
    return static_cast<double>(dev.size() - 1) * cfg.step;
}

double rmspe(const std::vector<double>& measured, const std::vector<double>& truth) {
    if (measured.size() != truth.size() || truth.empty()) fail(ErrorKind::Parameter, "rmspe: length mismatch or empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0.0) fail(ErrorKind::Domain, "rmspe: zero truth entry");
        const double r = (measured[i] - truth[i]) / truth[i];
        acc += r * r;
    }
    return 100.0 * std::sqrt(acc / static_cast<double>(truth.size()));
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json lengths = nlohmann::json::array();
    for (const auto& f : r.filament_lengths) {
        lengths.push_back({{"id", f.id}, {"length", f.length ? nlohmann::json(*f.length) : nlohmann::json(nullptr)}});
    }
    return {
        {"mssim", r.mssim},
        {"psnr", std::isfinite(r.psnr) ? nlohmann::json(r.psnr) : nlohmann::json(nullptr)},
        {"mse", r.mse},
        {"sigma_t_outside", r.sigma_t_outside},
        {"filament_lengths", lengths},
        {"rmspe", r.rmspe ? nlohmann::json(*r.rmspe) : nlohmann::json(nullptr)},
    };
}

void write_lengths_csv(std::ostream& out, const std::vector<FilamentLength>& lengths, const std::vector<double>& truth) {
    out << (truth.empty() ? "id,length\n" : "id,length,truth\n");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        out << lengths[i].id << ',';
        if (lengths[i].length) out << *lengths[i].length;
        if (!truth.empty()) out << ',' << (i < truth.size() ? truth[i] : 0.0);
        out << '\n';
    }
}

}  // namespace xrtm
