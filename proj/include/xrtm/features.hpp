#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xrtm/image.hpp"

namespace xrtm {

struct Shift {
    Eigen::Index dx = 0;
    Eigen::Index dy = 0;
    bool operator==(const Shift&) const = default;
};

/// Integer translation s such that b(y, x) ~ a(y - dy, x - dx) inside `region`,
/// from the argmax of the normalized cross-power spectrum. Ties go to the
/// smallest |shift|.
Shift phase_correlate(const Image2D& a, const Image2D& b, const Roi& region);

/// log(shot + eps) - log(circshift(cold_mean, shift) + eps).
Image2D residual(const Image2D& shot, const Image2D& cold_mean, const Shift& shift,
                 double epsilon = kDefaultLogEpsilon);

struct Patch {
    Image2D values;  ///< in [-1, 1]
    std::string source;
    Roi rect;
    double min = 0.0;
    double max = 0.0;
};

struct PatchBank {
    std::vector<Patch> patches;
    std::string domain = "log-residual";
};

/// Affine map of [min, max] onto [-1, 1]; constant crops become 0.
Patch normalize_patch(const Image2D& crop_values, const std::string& source, const Roi& rect);
/// Inverse of normalize_patch.
Image2D denormalize(const Patch& p);

PatchBank crop_and_normalize(const Image2D& r, const std::vector<Roi>& rects, const std::string& source = "");

/// Six equal tiles on a 2 x 3 grid (rows x columns). Remainder rows/columns
/// are filled by edge replication before tiling.
PatchBank split_shock_patches(const Image2D& shock_region, const std::string& source = "");

void save_patch_bank(const PatchBank& bank, const std::filesystem::path& dir);
PatchBank load_patch_bank(const std::filesystem::path& dir);

std::vector<Image2D> patch_values(const PatchBank& bank);

}  // namespace xrtm
