#include "support.hpp"
#include "xrtm/inference.hpp"

using namespace xrtm;
using namespace xrtm::nn;

TEST_CASE("a zero network leaves images unchanged") {
    const UNet<float> zero({4, 2});
    const Image2D img = test::random_image(32, 32, 1, 0.5, 2.0);
    const Image2D layer = predict_artifact_layer(zero, img);
    // exp(0) times the normalization scale
    CHECK(((layer - percentile(img, 90.0)).abs() < 1e-5 * percentile(img, 90.0)).all());
    CHECK(((clean_image(img, zero) - img).abs() < 1e-5).all());

    const Image2D flat = test::random_image(32, 32, 2, 0.5, 2.0);
    const Image2D t = corrected_transmission(0.3 * flat, flat, zero);
    CHECK(((t - 0.3).abs() < 1e-5).all());
}

TEST_CASE("odd shapes are padded and cropped back") {
    UNet<float> net({4, 2});
    net.init_he(4);
    const Image2D img = test::random_image(30, 27, 5, 0.5, 2.0);
    const Image2D layer = predict_artifact_layer(net, img);
    CHECK(layer.rows() == 30);
    CHECK(layer.cols() == 27);
    CHECK((layer > 0.0).all());
    CHECK(layer.allFinite());
    CHECK(((predict_artifact_layer(net, img) - layer).abs() == 0.0).all());
}

TEST_CASE("clean_with_layer keeps the mean") {
    const Image2D img = test::random_image(16, 16, 6, 0.5, 2.0);
    const Image2D layer = test::random_image(16, 16, 7, 0.8, 1.2);
    const Image2D c = clean_with_layer(img, layer);
    CHECK(c.mean() == doctest::Approx(img.mean()).epsilon(1e-12));
    const Image2D ratio = c * layer / img;
    CHECK(((ratio - ratio(0, 0)).abs() < 1e-12).all());
    CHECK_ERROR_KIND(predict_artifact_layer(UNet<float>({4, 2}), Image2D::Zero(16, 16)), ErrorKind::DegenerateScale);
}
