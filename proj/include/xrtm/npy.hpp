#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xrtm/image.hpp"

namespace xrtm {

/// A decoded NPY array. Values are widened to double whatever the stored dtype.
struct NpyArray {
    std::vector<std::size_t> shape;
    std::string descr;
    std::vector<double> values;

    std::size_t element_count() const;
};

NpyArray read_npy(std::istream& in);
NpyArray read_npy(const std::filesystem::path& path);

/// Writes NPY v1.0, little-endian, C order.
void write_npy(std::ostream& out, std::span<const std::size_t> shape, std::span<const double> values);
void write_npy(std::ostream& out, std::span<const std::size_t> shape, std::span<const float> values);
void write_npy(std::ostream& out, std::span<const std::size_t> shape,
               std::span<const std::uint8_t> values);

Image2D load_npy(const std::filesystem::path& path);
void save_npy(const Image2D& img, const std::filesystem::path& path);

/// Masks round-trip as '|u1'; loading accepts any numeric dtype and maps nonzero to 1.
Mask2D load_mask_npy(const std::filesystem::path& path);
void save_mask_npy(const Mask2D& mask, const std::filesystem::path& path);

}  // namespace xrtm
