#include "xrtm/png.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

namespace xrtm {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void save_png(const Image2D& img, const std::filesystem::path& path, bool log_scale) {
    Image2D v = img;
    if (log_scale) {
        const double lo = v.minCoeff();
        const double range = v.maxCoeff() - lo;
        const double offset = range > 0.0 ? 1e-3 * range : 1.0;
        v = (v - lo + offset).log();
    }
    const double lo = v.minCoeff();
    const double range = v.maxCoeff() - lo;

    const auto h = v.rows();
    const auto w = v.cols();
    std::vector<png_byte> pixels(static_cast<std::size_t>(h * w));
    for (Eigen::Index i = 0; i < h * w; ++i) {
        const double t = range > 0.0 ? (v.data()[i] - lo) / range : 0.0;
        pixels[static_cast<std::size_t>(i)] = static_cast<png_byte>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (Eigen::Index y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + y * w;

    std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
    if (!file) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::Io, "png: cannot allocate encoder");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "png: encoding failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace xrtm
