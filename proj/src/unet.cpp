#include "xrtm/unet.hpp"

#include <cmath>

#include "xrtm/random.hpp"

namespace xrtm::nn {

namespace {

template <class T>
ConvWeights<T> make_conv(Index in, Index out, Index k) {
    ConvWeights<T> c;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel = k;
    c.weight = RowMatrix<T>::Zero(out, in * k * k);
    c.bias = Vector<T>::Zero(out);
    return c;
}

template <class T>
ConvTransposeWeights<T> make_up(Index in, Index out) {
    ConvTransposeWeights<T> c;
    c.in_channels = in;
    c.out_channels = out;
    c.weight = RowMatrix<T>::Zero(in, 4 * out);
    c.bias = Vector<T>::Zero(out);
    return c;
}

template <class T>
void fill_normal(RowMatrix<T>& m, double stddev, Rng& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(normal(rng));
}

template <class P, class T>
void add_conv(std::vector<P>& out, const std::string& name, T& conv) {
    out.push_back({name + ".weight", {conv.out_channels, conv.in_channels, conv.kernel, conv.kernel},
                   conv.weight.data(), conv.weight.size()});
    out.push_back({name + ".bias", {conv.out_channels}, conv.bias.data(), conv.bias.size()});
}

template <class P, class T>
void add_up(std::vector<P>& out, const std::string& name, T& up) {
    out.push_back({name + ".weight", {up.in_channels, up.out_channels, 2, 2}, up.weight.data(), up.weight.size()});
    out.push_back({name + ".bias", {up.out_channels}, up.bias.data(), up.bias.size()});
}

template <class P, class Net>
std::vector<P> collect(Net& net) {
    std::vector<P> out;
    for (std::size_t i = 0; i < net.encoder.size(); ++i) {
        const std::string prefix = "enc" + std::to_string(i);
        add_conv(out, prefix + ".conv1", net.encoder[i].conv1);
        add_conv(out, prefix + ".conv2", net.encoder[i].conv2);
    }
    add_conv(out, "bottleneck.conv1", net.bottleneck.conv1);
    add_conv(out, "bottleneck.conv2", net.bottleneck.conv2);
    for (std::size_t j = net.decoder.size(); j-- > 0;) {
        const std::string prefix = "dec" + std::to_string(j);
        add_up(out, prefix + ".up", net.decoder[j].up);
        add_conv(out, prefix + ".conv1", net.decoder[j].block.conv1);
        add_conv(out, prefix + ".conv2", net.decoder[j].block.conv2);
    }
    add_conv(out, "head", net.head);
    return out;
}

template <class T>
Tensor4<T> block_forward(const typename UNet<T>::Block& blk, const Tensor4<T>& x, typename Workspace<T>::Block* ws) {
    Tensor4<T> pre1 = conv2d_forward(x, blk.conv1, 1);
    Tensor4<T> act1 = gelu_forward(pre1);
    Tensor4<T> pre2 = conv2d_forward(act1, blk.conv2, 1);
    Tensor4<T> act2 = gelu_forward(pre2);
    if (ws != nullptr) {
        ws->input = x;
        ws->pre1 = std::move(pre1);
        ws->act1 = std::move(act1);
        ws->pre2 = std::move(pre2);
        ws->act2 = act2;
    }
    return act2;
}

template <class T>
Tensor4<T> block_backward(const typename UNet<T>::Block& blk, const typename Workspace<T>::Block& ws,
                          const Tensor4<T>& d_out, typename UNet<T>::Block& grads, bool need_input_grad) {
    Tensor4<T> d_pre2 = gelu_backward(ws.pre2, d_out);
    Tensor4<T> d_act1;
    conv2d_backward(ws.act1, blk.conv2, 1, d_pre2, &d_act1, grads.conv2.weight, grads.conv2.bias);
    Tensor4<T> d_pre1 = gelu_backward(ws.pre1, d_act1);
    Tensor4<T> d_in;
    conv2d_backward(ws.input, blk.conv1, 1, d_pre1, need_input_grad ? &d_in : nullptr, grads.conv1.weight,
                    grads.conv1.bias);
    return d_in;
}

}  // namespace

void validate(const UNetConfig& cfg) {
    if (cfg.base_channels < 1) fail(ErrorKind::Parameter, "base_channels must be at least 1");
    if (cfg.depth < 1 || cfg.depth > 8) fail(ErrorKind::Parameter, "depth must lie in [1, 8]");
    if (cfg.in_channels < 1 || cfg.out_channels < 1) fail(ErrorKind::Parameter, "channel counts must be positive");
}

std::int64_t count_parameters(const UNetConfig& cfg) {
    validate(cfg);
    auto conv = [](std::int64_t in, std::int64_t out, std::int64_t k) { return in * out * k * k + out; };
    const std::int64_t b = cfg.base_channels;
    std::int64_t total = 0;
    std::int64_t in = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const std::int64_t c = b << i;
        total += conv(in, c, 3) + conv(c, c, 3);
        in = c;
    }
    const std::int64_t bottom = b << cfg.depth;
    total += conv(in, bottom, 3) + conv(bottom, bottom, 3);
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const std::int64_t c = b << i;
        total += (2 * c) * c * 4 + c;
        total += conv(2 * c, c, 3) + conv(c, c, 3);
    }
    total += conv(b, cfg.out_channels, 1);
    return total;
}

template <class T>
UNet<T>::UNet(const UNetConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    const Index b = cfg.base_channels;
    Index in = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const Index c = b << i;
        encoder.push_back({make_conv<T>(in, c, 3), make_conv<T>(c, c, 3)});
        in = c;
    }
    const Index bottom = b << cfg.depth;
    bottleneck = {make_conv<T>(in, bottom, 3), make_conv<T>(bottom, bottom, 3)};
    decoder.resize(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        const Index c = b << i;
        decoder[static_cast<std::size_t>(i)] = {make_up<T>(2 * c, c), {make_conv<T>(2 * c, c, 3), make_conv<T>(c, c, 3)}};
    }
    head = make_conv<T>(b, cfg.out_channels, 1);
}

template <class T>
void UNet<T>::init_he(std::uint64_t seed) {
    Rng rng(seed);
    auto init_conv = [&](ConvWeights<T>& c, double gain) {
        fill_normal(c.weight, std::sqrt(gain / static_cast<double>(c.in_channels * c.kernel * c.kernel)), rng);
        c.bias.setZero();
    };
    for (auto& e : encoder) {
        init_conv(e.conv1, 2.0);
        init_conv(e.conv2, 2.0);
    }
    init_conv(bottleneck.conv1, 2.0);
    init_conv(bottleneck.conv2, 2.0);
    for (std::size_t j = decoder.size(); j-- > 0;) {
        auto& d = decoder[j];
        // Each output of a 2x2 stride-2 transposed conv sees exactly in_channels terms.
        fill_normal(d.up.weight, std::sqrt(2.0 / static_cast<double>(d.up.in_channels)), rng);
        d.up.bias.setZero();
        init_conv(d.block.conv1, 2.0);
        init_conv(d.block.conv2, 2.0);
    }
    init_conv(head, 1.0);
}

template <class T>
std::vector<ParamView<T>> UNet<T>::parameters() {
    return collect<ParamView<T>>(*this);
}

template <class T>
std::vector<ParamView<const T>> UNet<T>::parameters() const {
    return collect<ParamView<const T>>(*this);
}

template <class T>
std::int64_t UNet<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.size;
    return n;
}

template <class T>
void UNet<T>::set_zero() {
    for (auto& p : parameters()) std::fill(p.data, p.data + p.size, T(0));
}

template <class T>
Tensor4<T> UNet<T>::forward(const Tensor4<T>& x, Workspace<T>* ws) const {
    const Index factor = Index{1} << cfg_.depth;
    if (x.c != cfg_.in_channels) fail(ErrorKind::Shape, "unet: input channel count mismatch " + shape_string(x));
    if (x.h % factor != 0 || x.w % factor != 0 || x.h == 0 || x.w == 0) {
        fail(ErrorKind::Shape, "unet: spatial size " + shape_string(x) + " not divisible by " + std::to_string(factor));
    }
    const auto depth = static_cast<std::size_t>(cfg_.depth);
    if (ws != nullptr) {
        ws->encoder.assign(depth, {});
        ws->pool_argmax.assign(depth, {});
        ws->decoder.assign(depth, {});
    }
    std::vector<Tensor4<T>> skips(depth);
    Tensor4<T> h = x;
    for (std::size_t i = 0; i < depth; ++i) {
        skips[i] = block_forward<T>(encoder[i], h, ws ? &ws->encoder[i] : nullptr);
        std::vector<Index> argmax;
        h = maxpool2x2_forward(skips[i], argmax);
        if (ws != nullptr) ws->pool_argmax[i] = std::move(argmax);
    }
    h = block_forward<T>(bottleneck, h, ws ? &ws->bottleneck : nullptr);
    for (std::size_t j = depth; j-- > 0;) {
        if (ws != nullptr) ws->decoder[j].input = h;
        Tensor4<T> up = convtranspose2x2_forward(h, decoder[j].up);
        h = block_forward<T>(decoder[j].block, concat_channels(skips[j], up), ws ? &ws->decoder[j].block : nullptr);
    }
    if (ws != nullptr) ws->head_input = h;
    return conv2d_forward(h, head, 0);
}

template <class T>
Tensor4<T> UNet<T>::backward(const Workspace<T>& ws, const Tensor4<T>& dy, UNet<T>& grads) const {
    if (!(grads.config() == cfg_)) fail(ErrorKind::Parameter, "gradient buffer has a different configuration");
    const auto depth = static_cast<std::size_t>(cfg_.depth);
    if (ws.encoder.size() != depth) fail(ErrorKind::Parameter, "workspace does not hold a forward pass");

    Tensor4<T> d;
    conv2d_backward(ws.head_input, head, 0, dy, &d, grads.head.weight, grads.head.bias);

    std::vector<Tensor4<T>> d_skips(depth);
    for (std::size_t j = 0; j < depth; ++j) {
        Tensor4<T> d_cat = block_backward<T>(decoder[j].block, ws.decoder[j].block, d, grads.decoder[j].block, true);
        Tensor4<T> d_up;
        split_channels(d_cat, ws.decoder[j].block.input.c - decoder[j].up.out_channels, d_skips[j], d_up);
        Tensor4<T> d_deeper;
        convtranspose2x2_backward(ws.decoder[j].input, decoder[j].up, d_up, &d_deeper, grads.decoder[j].up.weight,
                                  grads.decoder[j].up.bias);
        d = std::move(d_deeper);
    }
    d = block_backward<T>(bottleneck, ws.bottleneck, d, grads.bottleneck, true);
    for (std::size_t i = depth; i-- > 0;) {
        const Tensor4<T>& skip = ws.encoder[i].act2;
        Tensor4<T> d_act = maxpool2x2_backward(d, ws.pool_argmax[i], skip.n, skip.c, skip.h, skip.w);
        d_act.data += d_skips[i].data;
        d = block_backward<T>(encoder[i], ws.encoder[i], d_act, grads.encoder[i], true);
    }
    return d;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace xrtm::nn
