#pragma once

#include "xrtm/image.hpp"
#include "xrtm/unet.hpp"

namespace xrtm::nn {

struct InferenceConfig {
    double normalize_percentile = 90.0;
    double log_epsilon = kDefaultLogEpsilon;
};

/// exp(unet(log(img / s + eps))) * s with s the normalization percentile of img.
/// Shapes not divisible by 2^depth are reflect-padded and cropped back.
Image2D predict_artifact_layer(const UNet<float>& model, const Image2D& img, const InferenceConfig& cfg = {});

/// (img / layer) rescaled so that its mean equals mean(img).
Image2D clean_with_layer(const Image2D& img, const Image2D& layer);
Image2D clean_image(const Image2D& img, const UNet<float>& model, const InferenceConfig& cfg = {});

/// clean(shot) / clean(flat).
Image2D corrected_transmission(const Image2D& shot, const Image2D& flat, const UNet<float>& model,
                               const InferenceConfig& cfg = {}, double floor = kDefaultDivisionFloor);

}  // namespace xrtm::nn
