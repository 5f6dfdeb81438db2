#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "xrtm/error.hpp"
#include "xrtm/image.hpp"
#include "xrtm/random.hpp"

namespace test {

inline xrtm::Image2D random_image(Eigen::Index h, Eigen::Index w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    xrtm::Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    xrtm::Image2D img(h, w);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
    return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() / ("xrtm_test_" + name);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

  private:
    std::filesystem::path path_;
};

template <class F>
xrtm::ErrorKind error_kind(F&& f) {
    try {
        f();
    } catch (const xrtm::Error& e) {
        return e.kind();
    }
    FAIL("expected an xrtm::Error");
    return xrtm::ErrorKind::Config;
}

}  // namespace test

#define CHECK_ERROR_KIND(expr, kind) CHECK(test::error_kind([&] { (void)(expr); }) == (kind))
