#include <random>

#include "support.hpp"
#include "xrtm/features.hpp"
#include "xrtm/phantom.hpp"

using namespace xrtm;

TEST_CASE("phase correlation recovers integer shifts") {
    const Image2D a = gen_master_pattern(3, 64, 64, {2.0, 20.0}, 0.1).exp();
    const Roi all{0, 0, 64, 64};
    for (int dy = -5; dy <= 5; ++dy) {
        for (int dx = -5; dx <= 5; ++dx) {
            const Image2D b = circshift(a, dx, dy);
            CHECK(phase_correlate(a, b, all) == Shift{dx, dy});
        }
    }
    CHECK(phase_correlate(a, a, all) == Shift{0, 0});
}

TEST_CASE("phase correlation under noise") {
    int hits = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        const Image2D a = gen_master_pattern(100 + t, 64, 64, {2.0, 20.0}, 0.05).exp();
        const int dy = (t % 7) - 3, dx = 2 - (t % 5);
        Image2D b = circshift(a, dx, dy);
        Rng rng(500 + t);
        std::normal_distribution<double> g(0.0, 0.02);
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] *= 1.0 + g(rng);
        hits += phase_correlate(a, b, Roi{0, 0, 64, 64}) == Shift{dx, dy};
    }
    CHECK(hits >= 19);
}

TEST_CASE("residual") {
    const Image2D a = test::random_image(8, 8, 1, 0.5, 1.5);
    const Image2D b = test::random_image(8, 8, 2, 0.5, 1.5);
    CHECK(((residual(a, b, {}) + residual(b, a, {})).abs() < 1e-15).all());
    CHECK((residual(a, a, {}).abs() == 0.0).all());
    CHECK(((residual(circshift(a, 2, 1), a, {2, 1})).abs() < 1e-15).all());
}

TEST_CASE("patch normalization") {
    Image2D crop(2, 2);
    crop << -3, 1, 5, 0;
    const Patch p = normalize_patch(crop, "src", Roi{1, 2, 2, 2});
    CHECK(p.values.minCoeff() == -1.0);
    CHECK(p.values.maxCoeff() == 1.0);
    CHECK(p.values(0, 1) == doctest::Approx(0.0));
    CHECK(((denormalize(p) - crop).abs() < 1e-15).all());
    CHECK((normalize_patch(Image2D::Constant(3, 3, 2.0), "", {}).values == 0.0).all());

    const Image2D r = test::random_image(20, 20, 4);
    const PatchBank bank = crop_and_normalize(r, {Roi{0, 0, 5, 5}, Roi{10, 5, 8, 4}}, "r");
    REQUIRE(bank.patches.size() == 2);
    CHECK(bank.patches[1].values.rows() == 4);
    CHECK(bank.patches[1].values.cols() == 8);
    CHECK(bank.patches[1].rect == Roi{10, 5, 8, 4});
    CHECK_ERROR_KIND(crop_and_normalize(r, {Roi{18, 0, 5, 5}}), ErrorKind::Shape);
}

TEST_CASE("shock region splits into six tiles") {
    Image2D region(60, 90);
    for (Eigen::Index y = 0; y < 60; ++y)
        for (Eigen::Index x = 0; x < 90; ++x) region(y, x) = static_cast<double>(y * 90 + x);
    const PatchBank bank = split_shock_patches(region, "shock");
    REQUIRE(bank.patches.size() == 6);
    for (const auto& p : bank.patches) {
        CHECK(p.values.rows() == 30);
        CHECK(p.values.cols() == 30);
    }
    CHECK(bank.patches[1].rect == Roi{30, 0, 30, 30});
    CHECK(bank.patches[3].rect == Roi{0, 30, 30, 30});
    CHECK(((denormalize(bank.patches[5]) - region.block(30, 60, 30, 30)).abs() < 1e-9).all());

    // remainders are filled by edge replication
    const PatchBank odd = split_shock_patches(test::random_image(61, 91, 5));
    CHECK(odd.patches.size() == 6);
    CHECK(odd.patches[0].values.rows() == 31);
    CHECK(odd.patches[0].values.cols() == 31);
}

TEST_CASE("patch bank on disk") {
    test::TempDir dir("bank");
    const PatchBank bank = crop_and_normalize(test::random_image(20, 20, 6), {Roi{0, 0, 5, 5}, Roi{3, 4, 6, 7}}, "x");
    save_patch_bank(bank, dir.path());
    const PatchBank back = load_patch_bank(dir.path());
    REQUIRE(back.patches.size() == 2);
    CHECK(back.domain == bank.domain);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK((back.patches[i].values == bank.patches[i].values).all());
        CHECK(back.patches[i].min == bank.patches[i].min);
        CHECK(back.patches[i].max == bank.patches[i].max);
        CHECK(back.patches[i].rect == bank.patches[i].rect);
        CHECK(back.patches[i].source == "x");
    }
    CHECK(patch_values(back).size() == 2);
    CHECK_ERROR_KIND(load_patch_bank(dir / "missing"), ErrorKind::Io);
}
