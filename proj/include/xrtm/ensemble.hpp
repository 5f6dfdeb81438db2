#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "xrtm/inference.hpp"
#include "xrtm/training.hpp"

namespace xrtm::nn {

struct EnsembleModel {
    std::vector<UNet<float>> members;
    std::vector<std::uint64_t> member_seeds;
};

/// Member 0 uses the base seed itself, so a single model trained with that
/// seed is a valid first member.
std::uint64_t member_seed(std::uint64_t base_seed, int member);

/// Called after each member finishes: (index, result).
using MemberCallback = std::function<void(int, const TrainResult&)>;

/// M independent train() runs. `pretrained[i]`, when present, stands in for
/// member i and must have been trained with member_seed(base_seed, i).
EnsembleModel train_ensemble(const std::vector<Image2D>& train_set, const std::vector<Image2D>& val_set,
                             const TrainConfig& cfg, std::uint64_t base_seed, int members,
                             const std::vector<UNet<float>>& pretrained = {}, const MemberCallback& on_member = {});

void save_ensemble(const EnsembleModel& ens, const std::filesystem::path& dir);
/// Loads member_*.bin in lexicographic order (seeds from ensemble.json when present).
EnsembleModel load_ensemble(const std::filesystem::path& dir);

struct EnsembleOutput {
    Image2D mean;
    Image2D variance;
    /// Population variance of the predicted shot layers, a secondary output.
    Image2D layer_variance;
    std::vector<Image2D> member_maps;
};

/// Per-member corrected transmission; pixelwise mean and population variance.
EnsembleOutput ensemble_transmission(const EnsembleModel& ens, const Image2D& shot, const Image2D& flat,
                                     const InferenceConfig& cfg = {});

/// Pixelwise mean and population variance of a set of equally shaped maps.
void mean_and_variance(const std::vector<Image2D>& maps, Image2D& mean, Image2D& variance);

struct EntropyConfig {
    double variance_floor = 1e-12;
};

/// 0.5 * ln(2 pi e * max(var, floor)).
Image2D entropy_map(const Image2D& variance, const EntropyConfig& cfg = {});

struct OodReport {
    double mean_inside = 0.0;
    double mean_outside = 0.0;
    /// exp(mean_inside - mean_outside): differential entropies may be negative,
    /// so the ratio is taken on exp(h), which is proportional to the spread.
    double ratio = 1.0;
    bool flagged = false;
};

OodReport ood_flag(const Image2D& entropy, const Mask2D& signal_mask);

}  // namespace xrtm::nn
