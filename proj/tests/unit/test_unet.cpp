#include <random>
#include <sstream>

#include "support.hpp"
#include "xrtm/model_io.hpp"
#include "xrtm/unet.hpp"

using namespace xrtm;
using namespace xrtm::nn;

namespace {

std::int64_t count_by_hand(std::int64_t base, int depth) {
    auto conv = [](std::int64_t in, std::int64_t out, std::int64_t k) { return out * in * k * k + out; };
    std::int64_t total = 0, in = 1;
    for (int i = 0; i < depth; ++i) {
        const std::int64_t c = base << i;
        total += conv(in, c, 3) + conv(c, c, 3);
        in = c;
    }
    const std::int64_t bottom = base << depth;
    total += conv(in, bottom, 3) + conv(bottom, bottom, 3);
    in = bottom;
    for (int i = depth - 1; i >= 0; --i) {
        const std::int64_t c = base << i;
        total += in * c * 4 + c;  // transposed 2x2
        total += conv(2 * c, c, 3) + conv(c, c, 3);
        in = c;
    }
    return total + conv(base, 1, 1);
}

Tensor4<double> random_tensor(Index n, Index c, Index h, Index w, std::uint64_t seed) {
    Tensor4<double> t(n, c, h, w);
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Index i = 0; i < t.size(); ++i) t.data[i] = g(rng);
    return t;
}

}  // namespace

TEST_CASE("parameter counts") {
    CHECK(count_parameters({32, 3}) == 1925025);
    CHECK(count_parameters({48, 3}) == 4329841);
    CHECK(count_by_hand(32, 3) == 1925025);
    for (int base : {2, 8, 16}) {
        for (int depth : {1, 2, 3, 4}) {
            const UNetConfig cfg{base, depth};
            CHECK(count_parameters(cfg) == count_by_hand(base, depth));
            CHECK(UNet<float>(cfg).parameter_count() == count_parameters(cfg));
        }
    }
    CHECK_THROWS_AS(validate(UNetConfig{0, 3}), Error);
    CHECK_THROWS_AS(validate(UNetConfig{8, 0}), Error);
}

TEST_CASE("forward shapes and input checks") {
    UNet<float> net({4, 2});
    net.init_he(3);
    Tensor4<float> x(2, 1, 8, 12);
    const auto y = net.forward(x);
    CHECK(y.n == 2);
    CHECK(y.c == 1);
    CHECK(y.h == 8);
    CHECK(y.w == 12);
    CHECK_THROWS_AS(net.forward(Tensor4<float>(1, 1, 6, 8)), Error);
    CHECK_THROWS_AS(net.forward(Tensor4<float>(1, 2, 8, 8)), Error);

    // a zero network outputs zero
    UNet<float> zero({4, 2});
    Tensor4<float> ones(1, 1, 8, 8);
    ones.data.setOnes();
    CHECK((zero.forward(ones).data == 0.0f).all());

    UNet<float> a({4, 2}), b({4, 2});
    a.init_he(11);
    b.init_he(11);
    CHECK((a.forward(ones).data == b.forward(ones).data).all());
}

TEST_CASE("whole network gradient") {
    UNet<double> net({2, 2});
    net.init_he(5);
    // nonzero biases so every path is exercised
    for (auto& p : net.parameters()) {
        if (p.name.find("bias") != std::string::npos) {
            for (Index i = 0; i < p.size; ++i) p.data[i] = 0.05 * static_cast<double>((i % 5) - 2);
        }
    }
    Tensor4<double> x = random_tensor(2, 1, 8, 8, 7);
    const Tensor4<double> probe = random_tensor(2, 1, 8, 8, 8);
    auto loss = [&] { return (net.forward(x).data * probe.data).sum(); };

    Workspace<double> ws;
    net.forward(x, &ws);
    UNet<double> grads(net.config());
    const Tensor4<double> dx = net.backward(ws, probe, grads);

    const double h = 1e-6;
    double worst = 0.0;
    for (Index i = 0; i < x.size(); i += 3) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = loss();
        x.data[i] = keep - h;
        const double down = loss();
        x.data[i] = keep;
        worst = std::max(worst, std::abs((up - down) / (2 * h) - dx.data[i]));
    }
    CHECK(worst < 1e-6);

    auto params = net.parameters();
    auto gparams = grads.parameters();
    int tensors = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        double tensor_worst = 0.0;
        const Index stride = std::max<Index>(1, params[t].size / 7);
        for (Index i = 0; i < params[t].size; i += stride) {
            const double keep = params[t].data[i];
            params[t].data[i] = keep + h;
            const double up = loss();
            params[t].data[i] = keep - h;
            const double down = loss();
            params[t].data[i] = keep;
            const double numeric = (up - down) / (2 * h);
            tensor_worst = std::max(tensor_worst, std::abs(numeric - gparams[t].data[i]) / std::max(1.0, std::abs(numeric)));
        }
        CHECK_MESSAGE(tensor_worst < 1e-6, params[t].name);
        ++tensors;
    }
    CHECK(tensors >= 20);
}

TEST_CASE("model file round trip") {
    test::TempDir dir("model");
    UNet<float> net({4, 2});
    net.init_he(9);
    save_model(net, dir / "m.bin");
    const UNet<float> back = load_model<float>(dir / "m.bin");
    CHECK(back.config() == net.config());
    const auto a = net.parameters();
    const auto b = back.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].shape == b[i].shape);
        for (Index j = 0; j < a[i].size; ++j) REQUIRE(a[i].data[j] == b[i].data[j]);
    }

    const UNet<double> wide = load_model<double>(dir / "m.bin");
    CHECK(static_cast<float>(wide.parameters()[0].data[0]) == a[0].data[0]);

    std::stringstream bad("NOTAUNET........");
    CHECK_ERROR_KIND(read_model<float>(bad), ErrorKind::Format);
    CHECK_ERROR_KIND(load_model<float>(dir / "missing.bin"), ErrorKind::Io);

    std::stringstream full;
    write_model(full, net);
    std::stringstream truncated(full.str().substr(0, full.str().size() / 2));
    CHECK_THROWS_AS(read_model<float>(truncated), Error);
}
