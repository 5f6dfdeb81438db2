#pragma once

#include <filesystem>
#include <iosfwd>

#include "xrtm/unet.hpp"

namespace xrtm::nn {

/// Model container:
///   "XRTMUNET" | u32 version | u32 n | n bytes of JSON config
///   then per parameter: u32 name length | name | NPY v1.0 array
/// all integers little-endian. Arrays are stored in the model's scalar type.
inline constexpr std::uint32_t kModelFormatVersion = 1;

template <class T>
void write_model(std::ostream& out, const UNet<T>& model);
template <class T>
void save_model(const UNet<T>& model, const std::filesystem::path& path);

/// Reads any stored scalar type and converts to T.
template <class T>
UNet<T> read_model(std::istream& in);
template <class T>
UNet<T> load_model(const std::filesystem::path& path);

}  // namespace xrtm::nn
