#pragma once

#include <filesystem>

#include "xrtm/image.hpp"

namespace xrtm {

/// 8-bit grayscale heatmap export, min-max scaled. With `log_scale` the
/// values are first mapped through log(v - min + 1e-3 * range). Visualization
/// only; there is no PNG reader.
void save_png(const Image2D& img, const std::filesystem::path& path, bool log_scale = false);

}  // namespace xrtm
