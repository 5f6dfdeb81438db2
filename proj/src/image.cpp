#include "xrtm/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xrtm {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Format: return "format";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Io: return "io";
        case ErrorKind::Parameter: return "parameter";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::DegenerateScale: return "degenerate-scale";
        case ErrorKind::EmptyComplement: return "empty-complement";
        case ErrorKind::Geometry: return "geometry";
        case ErrorKind::Data: return "data";
        case ErrorKind::Numerical: return "numerical";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::Correlation: return "correlation";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

void check_roi(const Roi& roi, Eigen::Index height, Eigen::Index width) {
    if (roi.width <= 0 || roi.height <= 0 || roi.x0 < 0 || roi.y0 < 0 ||
        roi.x0 + roi.width > width || roi.y0 + roi.height > height) {
        std::ostringstream os;
        os << "roi (" << roi.x0 << "," << roi.y0 << "," << roi.width << "," << roi.height
           << ") does not fit a " << height << "x" << width << " image";
        fail(ErrorKind::Shape, os.str());
    }
}

void check_same_shape(const Image2D& a, const Image2D& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream os;
        os << what << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows()
           << "x" << b.cols();
        fail(ErrorKind::Shape, os.str());
    }
}

bool all_finite(const Image2D& img) { return img.isFinite().all(); }

double percentile(std::span<const double> values, double p) {
    if (values.empty()) fail(ErrorKind::Parameter, "percentile of an empty set");
    if (!(p >= 0.0 && p <= 100.0)) fail(ErrorKind::Parameter, "percentile outside [0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(lo), sorted.end());
    const double lo_value = sorted[lo];
    double hi_value = lo_value;
    if (hi != lo) {
        hi_value = *std::min_element(sorted.begin() + static_cast<std::ptrdiff_t>(lo) + 1, sorted.end());
    }
    return lo_value + (pos - static_cast<double>(lo)) * (hi_value - lo_value);
}

double percentile(const Image2D& img, double p) {
    return percentile(std::span<const double>(img.data(), static_cast<std::size_t>(img.size())), p);
}

Image2D percentile_normalize(const Image2D& img, double p) {
    if (!(p > 0.0 && p <= 100.0)) fail(ErrorKind::Parameter, "percentile must lie in (0, 100]");
    const double scale = percentile(img, p);
    if (scale == 0.0 || !std::isfinite(scale)) {
        fail(ErrorKind::DegenerateScale, "p-th percentile is zero; cannot normalize");
    }
    return img / scale;
}

Image2D reconstruct_transmission(const Image2D& shot, const Image2D& flat, double floor) {
    check_same_shape(shot, flat, "reconstruct_transmission");
    if (!(floor > 0.0)) fail(ErrorKind::Parameter, "division floor must be positive");
    return shot / flat.max(floor);
}

Image2D to_log(const Image2D& img, double epsilon) {
    if ((img < 0.0).any()) fail(ErrorKind::Domain, "to_log: negative pixel value");
    return (img + epsilon).log();
}

Image2D from_log(const Image2D& log_img, double epsilon) { return log_img.exp() - epsilon; }

MeanStd stat_outside_roi(const Image2D& img, const Roi& roi) {
    check_roi(roi, img.rows(), img.cols());
    if (roi.area() == img.size()) fail(ErrorKind::EmptyComplement, "roi covers the entire image");
    Mask2D mask = Mask2D::Zero(img.rows(), img.cols());
    mask.block(roi.y0, roi.x0, roi.height, roi.width).setOnes();
    return stat_outside_mask(img, mask);
}

MeanStd stat_outside_mask(const Image2D& img, const Mask2D& mask) {
    if (mask.rows() != img.rows() || mask.cols() != img.cols()) {
        fail(ErrorKind::Shape, "stat_outside_mask: mask shape mismatch");
    }
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        if (mask.data()[i] == 0) {
            sum += img.data()[i];
            ++n;
        }
    }
    if (n == 0) fail(ErrorKind::EmptyComplement, "mask covers the entire image");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        if (mask.data()[i] == 0) {
            const double d = img.data()[i] - mean;
            ss += d * d;
        }
    }
    return {mean, std::sqrt(ss / static_cast<double>(n))};
}

Image2D crop(const Image2D& img, const Roi& roi) {
    check_roi(roi, img.rows(), img.cols());
    return img.block(roi.y0, roi.x0, roi.height, roi.width);
}

Mask2D crop(const Mask2D& mask, const Roi& roi) {
    check_roi(roi, mask.rows(), mask.cols());
    return mask.block(roi.y0, roi.x0, roi.height, roi.width);
}

Image2D circshift(const Image2D& img, Eigen::Index dx, Eigen::Index dy) {
    const Eigen::Index h = img.rows();
    const Eigen::Index w = img.cols();
    Image2D out(h, w);
    const Eigen::Index sx = ((dx % w) + w) % w;
    const Eigen::Index sy = ((dy % h) + h) % h;
    for (Eigen::Index y = 0; y < h; ++y) {
        const Eigen::Index src_y = (y - sy + h) % h;
        for (Eigen::Index x = 0; x < w; ++x) out(y, x) = img(src_y, (x - sx + w) % w);
    }
    return out;
}

namespace {
Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
    if (n == 1) return 0;
    const Eigen::Index period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}
}  // namespace

Image2D pad_reflect_to_multiple(const Image2D& img, Eigen::Index multiple) {
    const Eigen::Index h = (img.rows() + multiple - 1) / multiple * multiple;
    const Eigen::Index w = (img.cols() + multiple - 1) / multiple * multiple;
    if (h == img.rows() && w == img.cols()) return img;
    Image2D out(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            out(y, x) = img(reflect_index(y, img.rows()), reflect_index(x, img.cols()));
        }
    }
    return out;
}

std::vector<double> row_lineout(const Image2D& img, Eigen::Index row) {
    if (row < 0 || row >= img.rows()) fail(ErrorKind::Shape, "lineout row outside image");
    std::vector<double> out(static_cast<std::size_t>(img.cols()));
    for (Eigen::Index x = 0; x < img.cols(); ++x) out[static_cast<std::size_t>(x)] = img(row, x);
    return out;
}

Roi mask_bounds(const Mask2D& mask, Eigen::Index margin) {
    Eigen::Index y_min = mask.rows(), y_max = -1, x_min = mask.cols(), x_max = -1;
    for (Eigen::Index y = 0; y < mask.rows(); ++y) {
        for (Eigen::Index x = 0; x < mask.cols(); ++x) {
            if (mask(y, x) == 0) continue;
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
        }
    }
    if (y_max < 0) return {};
    y_min = std::max<Eigen::Index>(0, y_min - margin);
    x_min = std::max<Eigen::Index>(0, x_min - margin);
    y_max = std::min(mask.rows() - 1, y_max + margin);
    x_max = std::min(mask.cols() - 1, x_max + margin);
    return {x_min, y_min, x_max - x_min + 1, y_max - y_min + 1};
}

}  // namespace xrtm
