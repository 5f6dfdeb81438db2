#include "xrtm/inference.hpp"

#include <cmath>

#include "xrtm/training.hpp"

namespace xrtm::nn {

Image2D predict_artifact_layer(const UNet<float>& model, const Image2D& img, const InferenceConfig& cfg) {
    if (img.size() == 0) fail(ErrorKind::Shape, "predict: empty image");
    const double scale = percentile(img, cfg.normalize_percentile);
    if (!(scale > 0.0)) fail(ErrorKind::DegenerateScale, "predict: normalization percentile is not positive");
    const Image2D x = network_input(img, cfg.normalize_percentile, cfg.log_epsilon);
    const Image2D padded = pad_reflect_to_multiple(x, Index{1} << model.config().depth);
    const Image2D y = from_tensor(model.forward(to_tensor(padded)));
    return y.topLeftCorner(img.rows(), img.cols()).exp() * scale;
}

Image2D clean_with_layer(const Image2D& img, const Image2D& layer) {
    check_same_shape(img, layer, "clean");
    const Image2D ratio = img / layer;
    const double denom = ratio.mean();
    if (denom == 0.0 || !std::isfinite(denom)) fail(ErrorKind::Numerical, "clean: degenerate cleaned mean");
    return ratio * (img.mean() / denom);
}

Image2D clean_image(const Image2D& img, const UNet<float>& model, const InferenceConfig& cfg) {
    return clean_with_layer(img, predict_artifact_layer(model, img, cfg));
}

Image2D corrected_transmission(const Image2D& shot, const Image2D& flat, const UNet<float>& model,
                               const InferenceConfig& cfg, double floor) {
    check_same_shape(shot, flat, "corrected_transmission");
    return reconstruct_transmission(clean_image(shot, model, cfg), clean_image(flat, model, cfg), floor);
}

}  // namespace xrtm::nn
