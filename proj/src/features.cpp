#include "xrtm/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "xrtm/fft.hpp"
#include "xrtm/npy.hpp"

namespace xrtm {

Shift phase_correlate(const Image2D& a, const Image2D& b, const Roi& region) {
    check_same_shape(a, b, "phase_correlate");
    check_roi(region, a.rows(), a.cols());
    if (region.width < 16 || region.height < 16) fail(ErrorKind::Shape, "phase_correlate: region must be at least 16x16");
    const ComplexSpectrum fa = fft2(crop(a, region));
    const ComplexSpectrum fb = fft2(crop(b, region));
    ComplexSpectrum cross = fb * fa.conjugate();
    const Image2D mag = cross.abs();
    const double scale = mag.maxCoeff();
    if (!(scale > 0.0) || !std::isfinite(scale)) fail(ErrorKind::Correlation, "phase_correlate: zero spectrum in region");
    const double cutoff = 1e-12 * scale;
    for (Eigen::Index i = 0; i < cross.size(); ++i) {
        cross.data()[i] = mag.data()[i] > cutoff ? cross.data()[i] / mag.data()[i] : std::complex<double>(0.0, 0.0);
    }
    const Image2D surface = ifft2(cross);

    const Eigen::Index h = surface.rows();
    const Eigen::Index w = surface.cols();
    const double peak = surface.maxCoeff();
    const double tie = 1e-9 * std::abs(peak);
    Shift best;
    double best_norm = std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (surface(y, x) < peak - tie) continue;
            const Shift s{static_cast<Eigen::Index>(signed_frequency(x, w)), static_cast<Eigen::Index>(signed_frequency(y, h))};
            const double norm = static_cast<double>(s.dx * s.dx + s.dy * s.dy);
            if (norm < best_norm) {
                best_norm = norm;
                best = s;
            }
        }
    }
    return best;
}

Image2D residual(const Image2D& shot, const Image2D& cold_mean, const Shift& shift, double epsilon) {
    check_same_shape(shot, cold_mean, "residual");
    return to_log(shot, epsilon) - to_log(circshift(cold_mean, shift.dx, shift.dy), epsilon);
}

Patch normalize_patch(const Image2D& values, const std::string& source, const Roi& rect) {
    if (values.size() == 0) fail(ErrorKind::Shape, "normalize_patch: empty crop");
    Patch p;
    p.source = source;
    p.rect = rect;
    p.min = values.minCoeff();
    p.max = values.maxCoeff();
    if (p.max > p.min) {
        p.values = ((values - p.min) * (2.0 / (p.max - p.min)) - 1.0).max(-1.0).min(1.0);
    } else {
        p.values = Image2D::Zero(values.rows(), values.cols());
    }
    return p;
}

Image2D denormalize(const Patch& p) {
    if (p.max > p.min) return (p.values + 1.0) * (0.5 * (p.max - p.min)) + p.min;
    return Image2D::Constant(p.values.rows(), p.values.cols(), p.min);
}

PatchBank crop_and_normalize(const Image2D& r, const std::vector<Roi>& rects, const std::string& source) {
    if (rects.empty()) fail(ErrorKind::Parameter, "crop_and_normalize: no rectangles");
    PatchBank bank;
    for (const Roi& rect : rects) {
        check_roi(rect, r.rows(), r.cols());
        bank.patches.push_back(normalize_patch(crop(r, rect), source, rect));
    }
    return bank;
}

PatchBank split_shock_patches(const Image2D& region, const std::string& source) {
    constexpr Eigen::Index kRows = 2, kCols = 3, kMinTile = 4;
    const Eigen::Index th = (region.rows() + kRows - 1) / kRows;
    const Eigen::Index tw = (region.cols() + kCols - 1) / kCols;
    if (th < kMinTile || tw < kMinTile) fail(ErrorKind::Geometry, "split_shock_patches: region too small for a 2x3 grid");
    Image2D padded(th * kRows, tw * kCols);
    for (Eigen::Index y = 0; y < padded.rows(); ++y) {
        for (Eigen::Index x = 0; x < padded.cols(); ++x) {
            padded(y, x) = region(std::min(y, region.rows() - 1), std::min(x, region.cols() - 1));
        }
    }
    PatchBank bank;
    for (Eigen::Index i = 0; i < kRows; ++i) {
        for (Eigen::Index j = 0; j < kCols; ++j) {
            const Roi rect{j * tw, i * th, tw, th};
            bank.patches.push_back(normalize_patch(crop(padded, rect), source, rect));
        }
    }
    return bank;
}

void save_patch_bank(const PatchBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"domain", bank.domain}, {"patches", nlohmann::json::array()}};
    for (std::size_t i = 0; i < bank.patches.size(); ++i) {
        const Patch& p = bank.patches[i];
        char name[32];
        std::snprintf(name, sizeof name, "patch_%03zu.npy", i);
        save_npy(p.values, dir / name);
        meta["patches"].push_back({{"file", name},
                                   {"source", p.source},
                                   {"rect", {p.rect.x0, p.rect.y0, p.rect.width, p.rect.height}},
                                   {"min", p.min},
                                   {"max", p.max}});
    }
    std::ofstream out(dir / "bank.json", std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "bank.json").string());
    out << meta.dump(2) << '\n';
}

PatchBank load_patch_bank(const std::filesystem::path& dir) {
    std::ifstream in(dir / "bank.json");
    if (!in) fail(ErrorKind::Io, "patch bank metadata not found in " + dir.string());
    PatchBank bank;
    try {
        const auto meta = nlohmann::json::parse(in);
        bank.domain = meta.value("domain", bank.domain);
        for (const auto& e : meta.at("patches")) {
            Patch p;
            p.values = load_npy(dir / e.at("file").get<std::string>());
            p.source = e.value("source", "");
            const auto rect = e.at("rect").get<std::vector<Eigen::Index>>();
            if (rect.size() != 4) fail(ErrorKind::Format, "bank.json: rect must have four entries");
            p.rect = {rect[0], rect[1], rect[2], rect[3]};
            p.min = e.at("min").get<double>();
            p.max = e.at("max").get<double>();
            if (p.values.minCoeff() < -1.0 || p.values.maxCoeff() > 1.0) fail(ErrorKind::Data, "patch outside [-1, 1]");
            bank.patches.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("bank.json: ") + e.what());
    }
    return bank;
}

std::vector<Image2D> patch_values(const PatchBank& bank) {
    std::vector<Image2D> out;
    for (const Patch& p : bank.patches) out.push_back(p.values);
    return out;
}

}  // namespace xrtm
