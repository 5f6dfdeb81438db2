#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "xrtm/image.hpp"
#include "xrtm/unet.hpp"

namespace xrtm::nn {

struct LossConfig {
    double alpha = 10.0;
};

template <class T>
struct LossResult {
    double loss = 0.0;
    Tensor4<T> grad;
};

/// mean((1 + alpha M) |pred - target|) with gradient (1 + alpha M) sign(pred - target) / N,
/// sign(0) = 0. The mask is broadcast over batch and channels.
template <class T>
LossResult<T> weighted_l1_loss(const Tensor4<T>& pred, const Tensor4<T>& target, const Mask2D& mask, double alpha);

struct AugmentConfig {
    double paste_probability = 0.9;
    /// Log-domain amplitude of a pasted patch (patch values are in [-1, 1]).
    double paste_gain = 0.2;
    /// Gain is drawn uniformly from paste_gain * [1 - jitter, 1 + jitter].
    double gain_jitter = 0.5;
    /// Flip the patch sign with probability 1/2 so both polarities are seen.
    bool random_sign = true;
    /// Pixels whose centred patch value reaches this magnitude form the mask.
    double support_threshold = 0.2;
    int pastes_per_image = 1;
    std::vector<Image2D> patch_bank;
};

void validate(const AugmentConfig& cfg);

struct Augmented {
    Image2D image;
    Mask2D mask;
    int pastes = 0;
};

/// Adds gain * (patch - median(patch)) at a random location below the
/// registration band. The median shift keeps the patch background at zero.
Augmented copy_paste_augment(const Image2D& x_log, const AugmentConfig& cfg, std::uint64_t seed);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class T>
struct AdamState {
    std::int64_t step = 0;
    UNet<T> m, v;

    explicit AdamState(const UNetConfig& cfg) : m(cfg), v(cfg) {}
};

template <class T>
void adam_step(UNet<T>& model, const UNet<T>& grads, AdamState<T>& state, const AdamConfig& cfg);

struct TrainConfig {
    UNetConfig unet;
    LossConfig loss;
    AugmentConfig augment;
    AdamConfig adam;
    int epochs = 20;
    std::uint64_t seed = 0;
    double normalize_percentile = 90.0;
    double log_epsilon = kDefaultLogEpsilon;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_time = 0.0;
};

struct TrainResult {
    UNet<float> model;
    std::vector<EpochLog> log;
};

/// Network input for an intensity image: log(img / percentile(img) + epsilon).
Image2D network_input(const Image2D& img, double percentile_p, double epsilon);

/// Trains on cold shots: input = network_input(cold) + pasted patches, target =
/// network_input(cold). One JSON line per epoch is written to `log` when given.
/// Initialization, shuffling and augmentation all derive from cfg.seed.
TrainResult train(const std::vector<Image2D>& train_set, const std::vector<Image2D>& val_set, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

Tensor4<float> to_tensor(const Image2D& img);
Image2D from_tensor(const Tensor4<float>& t);

}  // namespace xrtm::nn
