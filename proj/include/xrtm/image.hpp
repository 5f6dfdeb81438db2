#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xrtm/error.hpp"

namespace xrtm {

/// Dense row-major image. Rows index y (height), columns index x (width).
template <class Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image2D = Image<double>;
using Mask2D = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Roi {
    Eigen::Index x0 = 0;
    Eigen::Index y0 = 0;
    Eigen::Index width = 0;
    Eigen::Index height = 0;

    bool contains(Eigen::Index y, Eigen::Index x) const {
        return y >= y0 && y < y0 + height && x >= x0 && x < x0 + width;
    }
    Eigen::Index area() const { return width * height; }
    bool operator==(const Roi&) const = default;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

constexpr double kDefaultDivisionFloor = 1e-6;
constexpr double kDefaultLogEpsilon = 1e-6;

/// Throws a Shape error unless `roi` lies inside an h x w image and is non-empty.
void check_roi(const Roi& roi, Eigen::Index height, Eigen::Index width);
void check_same_shape(const Image2D& a, const Image2D& b, const char* what);
bool all_finite(const Image2D& img);

/// Percentile with linear interpolation between order statistics
/// (position p/100 * (n-1)), the numpy default.
double percentile(std::span<const double> values, double p);
double percentile(const Image2D& img, double p);

Image2D percentile_normalize(const Image2D& img, double p = 90.0);

/// T = shot / max(flat, floor), per pixel.
Image2D reconstruct_transmission(const Image2D& shot, const Image2D& flat,
                                 double floor = kDefaultDivisionFloor);

Image2D to_log(const Image2D& img, double epsilon = kDefaultLogEpsilon);
Image2D from_log(const Image2D& log_img, double epsilon = kDefaultLogEpsilon);

/// Population mean and standard deviation over pixels outside `roi`.
MeanStd stat_outside_roi(const Image2D& img, const Roi& roi);
/// Population mean and standard deviation over pixels where mask == 0.
MeanStd stat_outside_mask(const Image2D& img, const Mask2D& mask);

Image2D crop(const Image2D& img, const Roi& roi);
Mask2D crop(const Mask2D& mask, const Roi& roi);

/// Circular shift: out(y, x) = img(y - dy, x - dx) with periodic wrap.
Image2D circshift(const Image2D& img, Eigen::Index dx, Eigen::Index dy);

/// Reflect-pads bottom/right edges so both dimensions become multiples of `multiple`.
Image2D pad_reflect_to_multiple(const Image2D& img, Eigen::Index multiple);

/// Row (y = const) profile.
std::vector<double> row_lineout(const Image2D& img, Eigen::Index row);

/// Bounding rectangle of the nonzero mask pixels grown by `margin` and clipped
/// to the image. Returns an empty Roi if the mask is empty.
Roi mask_bounds(const Mask2D& mask, Eigen::Index margin = 0);

}  // namespace xrtm
