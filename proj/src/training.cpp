#include "xrtm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "xrtm/phantom.hpp"
#include "xrtm/random.hpp"

namespace xrtm::nn {

template <class T>
LossResult<T> weighted_l1_loss(const Tensor4<T>& pred, const Tensor4<T>& target, const Mask2D& mask, double alpha) {
    if (!pred.same_shape(target)) {
        fail(ErrorKind::Shape, "loss: prediction " + shape_string(pred) + " vs target " + shape_string(target));
    }
    if (mask.rows() != pred.h || mask.cols() != pred.w) fail(ErrorKind::Shape, "loss: mask shape mismatch");
    if (!(alpha >= 0.0)) fail(ErrorKind::Parameter, "loss: alpha must be non-negative");
    LossResult<T> out;
    out.grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);
    const Index plane = pred.plane();
    const Index planes = pred.n * pred.c;
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double total = 0.0;
    for (Index p = 0; p < planes; ++p) {
        for (Index i = 0; i < plane; ++i) {
            const Index k = p * plane + i;
            const double weight = 1.0 + alpha * static_cast<double>(mask.data()[i] != 0);
            const double diff = static_cast<double>(pred.data[k]) - static_cast<double>(target.data[k]);
            total += weight * std::abs(diff);
            const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            out.grad.data[k] = static_cast<T>(weight * sign * inv_n);
        }
    }
    out.loss = total * inv_n;
    return out;
}

void validate(const AugmentConfig& cfg) {
    if (!(cfg.paste_probability >= 0.0 && cfg.paste_probability <= 1.0)) {
        fail(ErrorKind::Parameter, "augment: paste_probability must lie in [0, 1]");
    }
    if (!(cfg.gain_jitter >= 0.0 && cfg.gain_jitter <= 1.0)) fail(ErrorKind::Parameter, "augment: gain_jitter must lie in [0, 1]");
    if (cfg.pastes_per_image < 1) fail(ErrorKind::Parameter, "augment: pastes_per_image must be at least 1");
    if (cfg.paste_probability > 0.0 && cfg.patch_bank.empty()) {
        fail(ErrorKind::Parameter, "augment: empty patch bank with nonzero paste probability");
    }
    for (const Image2D& p : cfg.patch_bank) {
        if (p.size() == 0 || p.minCoeff() < -1.0 || p.maxCoeff() > 1.0) {
            fail(ErrorKind::Parameter, "augment: patch values must lie in [-1, 1]");
        }
    }
}

Augmented copy_paste_augment(const Image2D& x_log, const AugmentConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Augmented out{x_log, Mask2D::Zero(x_log.rows(), x_log.cols()), 0};
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (!(unit(rng) < cfg.paste_probability)) return out;

    const Index h = x_log.rows();
    const Index w = x_log.cols();
    const Index band = registration_band_rows(h);
    for (int k = 0; k < cfg.pastes_per_image; ++k) {
        std::uniform_int_distribution<std::size_t> pick(0, cfg.patch_bank.size() - 1);
        const Image2D& patch = cfg.patch_bank[pick(rng)];
        const Index ph = patch.rows();
        const Index pw = patch.cols();
        if (ph > h - band || pw > w) {
            fail(ErrorKind::Geometry, "augment: patch " + std::to_string(ph) + "x" + std::to_string(pw) +
                                          " does not fit below the registration band");
        }
        const Index y0 = std::uniform_int_distribution<Index>(band, h - ph)(rng);
        const Index x0 = std::uniform_int_distribution<Index>(0, w - pw)(rng);
        double gain = cfg.paste_gain * (1.0 + cfg.gain_jitter * (2.0 * unit(rng) - 1.0));
        if (cfg.random_sign && unit(rng) < 0.5) gain = -gain;

        const Image2D centred = patch - percentile(patch, 50.0);
        out.image.block(y0, x0, ph, pw) += gain * centred;
        for (Index y = 0; y < ph; ++y) {
            for (Index x = 0; x < pw; ++x) {
                if (std::abs(centred(y, x)) >= cfg.support_threshold) out.mask(y0 + y, x0 + x) = 1;
            }
        }
        ++out.pastes;
    }
    return out;
}

template <class T>
void adam_step(UNet<T>& model, const UNet<T>& grads, AdamState<T>& state, const AdamConfig& cfg) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
    const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
    const T lr = static_cast<T>(cfg.learning_rate);
    const T eps = static_cast<T>(cfg.epsilon);

    auto params = model.parameters();
    const auto g = grads.parameters();
    auto m = state.m.parameters();
    auto v = state.v.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
        Eigen::Map<Arr> p(params[i].data, params[i].size);
        Eigen::Map<const Arr> gi(g[i].data, g[i].size);
        Eigen::Map<Arr> mi(m[i].data, m[i].size);
        Eigen::Map<Arr> vi(v[i].data, v[i].size);
        mi = b1 * mi + (T(1) - b1) * gi;
        vi = b2 * vi + (T(1) - b2) * gi.square();
        p -= lr * (mi * c1) / ((vi * c2).sqrt() + eps);
    }
}

Image2D network_input(const Image2D& img, double percentile_p, double epsilon) {
    return to_log(percentile_normalize(img, percentile_p), epsilon);
}

Tensor4<float> to_tensor(const Image2D& img) {
    Tensor4<float> t(1, 1, img.rows(), img.cols());
    for (Index i = 0; i < img.size(); ++i) t.data[i] = static_cast<float>(img.data()[i]);
    return t;
}

Image2D from_tensor(const Tensor4<float>& t) {
    if (t.n != 1 || t.c != 1) fail(ErrorKind::Shape, "expected a single-plane tensor, got " + shape_string(t));
    Image2D img(t.h, t.w);
    for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<double>(t.data[i]);
    return img;
}

namespace {

constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagShuffle = 2;
constexpr std::uint64_t kTagAugment = 3;
constexpr std::uint64_t kTagValidation = 4;

std::vector<Image2D> prepare(const std::vector<Image2D>& images, const TrainConfig& cfg) {
    std::vector<Image2D> out;
    out.reserve(images.size());
    for (const Image2D& img : images) out.push_back(network_input(img, cfg.normalize_percentile, cfg.log_epsilon));
    return out;
}

}  // namespace

TrainResult train(const std::vector<Image2D>& train_set, const std::vector<Image2D>& val_set, const TrainConfig& cfg,
                  std::ostream* log) {
    if (cfg.epochs < 0) fail(ErrorKind::Parameter, "train: epochs must be non-negative");
    if (train_set.empty() && cfg.epochs > 0) fail(ErrorKind::Data, "train: empty training set");
    if (cfg.augment.paste_probability > 0.0) validate(cfg.augment);

    TrainResult result{UNet<float>(cfg.unet), {}};
    UNet<float>& model = result.model;
    model.init_he(derive_seed(cfg.seed, {kTagInit}));

    const std::vector<Image2D> inputs = prepare(train_set, cfg);
    const std::vector<Image2D> val_inputs = prepare(val_set, cfg);
    UNet<float> grads(cfg.unet);
    AdamState<float> adam(cfg.unet);
    Workspace<float> ws;
    const auto start = std::chrono::steady_clock::now();

    std::vector<std::size_t> order(inputs.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double train_loss = 0.0;
        for (std::size_t step = 0; step < order.size(); ++step) {
            const std::size_t idx = order[step];
            const Augmented aug = copy_paste_augment(
                inputs[idx], cfg.augment,
                derive_seed(cfg.seed, {kTagAugment, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)}));
            const Tensor4<float> x = to_tensor(aug.image);
            const Tensor4<float> y = to_tensor(inputs[idx]);
            const Tensor4<float> pred = model.forward(x, &ws);
            const LossResult<float> loss = weighted_l1_loss(pred, y, aug.mask, cfg.loss.alpha);
            if (!std::isfinite(loss.loss)) {
                fail(ErrorKind::Numerical, "train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                               std::to_string(idx));
            }
            grads.set_zero();
            model.backward(ws, loss.grad, grads);
            adam_step(model, grads, adam, cfg.adam);
            train_loss += loss.loss;
        }
        train_loss /= static_cast<double>(std::max<std::size_t>(order.size(), 1));

        double val_loss = 0.0;
        for (std::size_t i = 0; i < val_inputs.size(); ++i) {
            const Augmented aug = copy_paste_augment(val_inputs[i], cfg.augment,
                                                     derive_seed(cfg.seed, {kTagValidation, static_cast<std::uint64_t>(i)}));
            const Tensor4<float> pred = model.forward(to_tensor(aug.image));
            val_loss += weighted_l1_loss(pred, to_tensor(val_inputs[i]), aug.mask, cfg.loss.alpha).loss;
        }
        if (!val_inputs.empty()) val_loss /= static_cast<double>(val_inputs.size());

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back({epoch + 1, train_loss, val_loss, wall});
        if (log != nullptr) {
            nlohmann::json line = {{"epoch", epoch + 1}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"wall_time", wall}};
            *log << line.dump() << '\n' << std::flush;
        }
    }
    return result;
}

template LossResult<float> weighted_l1_loss(const Tensor4<float>&, const Tensor4<float>&, const Mask2D&, double);
template LossResult<double> weighted_l1_loss(const Tensor4<double>&, const Tensor4<double>&, const Mask2D&, double);
template void adam_step(UNet<float>&, const UNet<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(UNet<double>&, const UNet<double>&, AdamState<double>&, const AdamConfig&);

}  // namespace xrtm::nn
