#include <algorithm>
#include <cmath>
#include <vector>

#include "support.hpp"
#include "xrtm/image.hpp"

using namespace xrtm;

TEST_CASE("percentile interpolates between order statistics") {
    Image2D img(10, 10);
    for (int i = 0; i < 100; ++i) img.data()[i] = 100 - i;  // 1..100 in reverse
    CHECK(percentile(img, 90.0) == doctest::Approx(90.1).epsilon(1e-14));
    CHECK(percentile(img, 0.0) == 1.0);
    CHECK(percentile(img, 100.0) == 100.0);

    // brute-force sort + interpolation
    const Image2D r = test::random_image(7, 13, 3);
    std::vector<double> v(r.data(), r.data() + r.size());
    std::sort(v.begin(), v.end());
    for (double p : {5.0, 37.5, 50.0, 99.5}) {
        const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const double expect = v[lo] + (pos - lo) * (v[std::min(lo + 1, v.size() - 1)] - v[lo]);
        CHECK(percentile(r, p) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("percentile_normalize") {
    Image2D img(10, 10);
    for (int i = 0; i < 100; ++i) img.data()[i] = i + 1;
    const Image2D n = percentile_normalize(img, 90.0);
    CHECK(n.maxCoeff() == doctest::Approx(100.0 / 90.1));
    CHECK(img(9, 9) == 100.0);

    const Image2D c = Image2D::Constant(4, 5, 3.5);
    CHECK((percentile_normalize(c, 37.0) == 1.0).all());
    CHECK_ERROR_KIND(percentile_normalize(Image2D::Zero(3, 3)), ErrorKind::DegenerateScale);

    // idempotent once the percentile is 1
    const Image2D once = percentile_normalize(test::random_image(9, 9, 4, 0.5, 2.0));
    CHECK(((percentile_normalize(once) - once).abs() < 1e-15).all());
}

TEST_CASE("reconstruct_transmission") {
    const Image2D flat = test::random_image(6, 8, 1, 0.5, 2.0);
    CHECK(((reconstruct_transmission(flat, flat) - 1.0).abs() < 1e-15).all());
    CHECK(((reconstruct_transmission(0.42 * flat, flat) - 0.42).abs() < 1e-15).all());

    Image2D zero_flat = flat;
    zero_flat(2, 3) = 0.0;
    const Image2D t = reconstruct_transmission(flat, zero_flat, 1e-6);
    CHECK(std::isfinite(t(2, 3)));
    CHECK(t(2, 3) == doctest::Approx(flat(2, 3) / 1e-6));

    const Image2D shot = test::random_image(6, 8, 2, 0.1, 1.0);
    const Image2D a = reconstruct_transmission(shot, flat);
    const Image2D b = reconstruct_transmission(7.3 * shot, 7.3 * flat);
    CHECK((((a - b) / a).abs() < 1e-12).all());
    CHECK_ERROR_KIND(reconstruct_transmission(shot, Image2D::Ones(6, 7)), ErrorKind::Shape);
}

TEST_CASE("log conversion") {
    const double eps = 1e-6;
    CHECK((to_log(Image2D::Zero(3, 3), eps) == std::log(eps)).all());
    Image2D one(1, 1);
    one(0, 0) = std::exp(1.0) - eps;
    CHECK(to_log(one, eps)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    const Image2D img = test::random_image(12, 12, 5, 0.0, 10.0);
    const Image2D back = from_log(to_log(img, eps), eps);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        CHECK(std::abs(back.data()[i] - img.data()[i]) <= 1e-12 * std::max(1.0, img.data()[i]));
    }
    Image2D neg = img;
    neg(0, 0) = -1.0;
    CHECK_ERROR_KIND(to_log(neg, eps), ErrorKind::Domain);
}

TEST_CASE("statistics outside an roi") {
    const MeanStd c = stat_outside_roi(Image2D::Constant(8, 8, 2.0), Roi{1, 1, 3, 3});
    CHECK(c.mean == 2.0);
    CHECK(c.std == 0.0);

    Image2D board(8, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) board(y, x) = (x + y) % 2;
    }
    // a 2x2 roi removes two zeros and two ones
    const MeanStd s = stat_outside_roi(board, Roi{2, 2, 2, 2});
    CHECK(s.mean == doctest::Approx(0.5));
    CHECK(s.std == doctest::Approx(0.5));

    CHECK_ERROR_KIND(stat_outside_roi(board, Roi{0, 0, 8, 8}), ErrorKind::EmptyComplement);
    CHECK_ERROR_KIND(stat_outside_roi(board, Roi{6, 6, 4, 4}), ErrorKind::Shape);

    Mask2D m = Mask2D::Zero(8, 8);
    m.block(2, 2, 2, 2).setOnes();
    const MeanStd sm = stat_outside_mask(board, m);
    CHECK(sm.mean == doctest::Approx(s.mean));
    CHECK(sm.std == doctest::Approx(s.std));
}

TEST_CASE("geometry helpers") {
    const Image2D img = test::random_image(5, 7, 6);
    const Image2D s = circshift(img, 2, -1);
    CHECK(s(1, 2) == img(2, 0));
    CHECK(s(4, 0) == img(0, 5));
    CHECK((circshift(s, -2, 1) == img).all());

    const Image2D p = pad_reflect_to_multiple(img, 4);
    CHECK(p.rows() == 8);
    CHECK(p.cols() == 8);
    CHECK((p.topLeftCorner(5, 7) == img).all());

    Mask2D m = Mask2D::Zero(10, 10);
    m(3, 4) = 1;
    m(6, 5) = 1;
    CHECK(mask_bounds(m) == Roi{4, 3, 2, 4});
    CHECK(mask_bounds(m, 5) == Roi{0, 0, 10, 10});
    CHECK(mask_bounds(Mask2D::Zero(4, 4)).area() == 0);

    const auto row = row_lineout(img, 3);
    CHECK(row.size() == 7);
    CHECK(row[4] == img(3, 4));
}
