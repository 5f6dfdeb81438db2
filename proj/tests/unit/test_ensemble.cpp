#include <cmath>
#include <numbers>

#include "support.hpp"
#include "xrtm/ensemble.hpp"

using namespace xrtm;
using namespace xrtm::nn;

TEST_CASE("entropy of a gaussian") {
    Image2D var(1, 3);
    var << 1.0, std::exp(2.0), 0.0;
    const Image2D h = entropy_map(var);
    const double unit = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    CHECK(h(0, 0) == doctest::Approx(1.4189385332046727).epsilon(1e-15));
    CHECK(h(0, 0) == doctest::Approx(unit));
    CHECK(h(0, 1) == doctest::Approx(unit + 1.0));
    CHECK(h(0, 2) == doctest::Approx(unit + 0.5 * std::log(1e-12)));
    CHECK_ERROR_KIND(entropy_map(-var), ErrorKind::Domain);
    CHECK_ERROR_KIND(entropy_map(var, {0.0}), ErrorKind::Parameter);
}

TEST_CASE("mean and population variance") {
    std::vector<Image2D> maps{Image2D::Constant(2, 2, 1.0), Image2D::Constant(2, 2, 3.0), Image2D::Constant(2, 2, 5.0)};
    Image2D mean, var;
    mean_and_variance(maps, mean, var);
    CHECK((mean == 3.0).all());
    CHECK(((var - 8.0 / 3.0).abs() < 1e-14).all());
    CHECK_ERROR_KIND(mean_and_variance({}, mean, var), ErrorKind::Data);
}

TEST_CASE("ood flag") {
    Image2D h = Image2D::Constant(4, 4, 1.0);
    Mask2D m = Mask2D::Zero(4, 4);
    m.block(1, 1, 2, 2).setOnes();
    h.block(1, 1, 2, 2).setConstant(2.0);
    const OodReport r = ood_flag(h, m);
    CHECK(r.mean_inside == 2.0);
    CHECK(r.mean_outside == 1.0);
    CHECK(r.ratio == doctest::Approx(std::numbers::e));
    CHECK(r.flagged);

    h.block(1, 1, 2, 2).setConstant(0.5);
    CHECK_FALSE(ood_flag(h, m).flagged);
    CHECK_ERROR_KIND(ood_flag(h, Mask2D::Zero(4, 4)), ErrorKind::Data);
    CHECK_ERROR_KIND(ood_flag(h, Mask2D::Ones(4, 4)), ErrorKind::EmptyComplement);
    CHECK_ERROR_KIND(ood_flag(h, Mask2D::Zero(3, 4)), ErrorKind::Shape);
}

TEST_CASE("ensemble members and persistence") {
    CHECK(member_seed(77, 0) == 77);
    CHECK(member_seed(77, 1) != 77);
    CHECK(member_seed(77, 1) != member_seed(77, 2));
    CHECK(member_seed(77, 3) == member_seed(77, 3));

    std::vector<Image2D> train_set{test::random_image(16, 16, 1, 0.8, 1.2), test::random_image(16, 16, 2, 0.8, 1.2)};
    TrainConfig cfg;
    cfg.unet = {2, 2};
    cfg.epochs = 1;
    cfg.augment.patch_bank = {Image2D::Ones(4, 4)};
    int called = 0;
    const EnsembleModel ens = train_ensemble(train_set, {}, cfg, 5, 3, {}, [&](int, const TrainResult&) { ++called; });
    CHECK(called == 3);
    REQUIRE(ens.members.size() == 3);
    CHECK(ens.member_seeds[0] == 5);

    // member 0 equals a plain run with the base seed
    cfg.seed = 5;
    const TrainResult single = train(train_set, {}, cfg);
    CHECK(single.model.parameters()[0].data[0] == ens.members[0].parameters()[0].data[0]);

    test::TempDir dir("ensemble");
    save_ensemble(ens, dir.path());
    const EnsembleModel back = load_ensemble(dir.path());
    CHECK(back.member_seeds == ens.member_seeds);
    const Image2D shot = test::random_image(16, 16, 3, 0.3, 0.6);
    const Image2D flat = test::random_image(16, 16, 4, 0.8, 1.2);
    const EnsembleOutput a = ensemble_transmission(ens, shot, flat);
    const EnsembleOutput b = ensemble_transmission(back, shot, flat);
    CHECK((a.mean == b.mean).all());
    CHECK((a.variance >= 0.0).all());
    CHECK(a.member_maps.size() == 3);
    Image2D m, v;
    mean_and_variance(a.member_maps, m, v);
    CHECK(((m - a.mean).abs() < 1e-15).all());

    CHECK_ERROR_KIND(train_ensemble(train_set, {}, cfg, 5, 1), ErrorKind::Parameter);
    CHECK_ERROR_KIND(load_ensemble(dir / "nope"), ErrorKind::Io);
}
