#include "xrtm/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "xrtm/model_io.hpp"
#include "xrtm/random.hpp"

namespace xrtm::nn {

std::uint64_t member_seed(std::uint64_t base_seed, int member) {
    if (member < 0) fail(ErrorKind::Parameter, "member index must be non-negative");
    if (member == 0) return base_seed;
    return derive_seed(base_seed, {0x656e73ULL, static_cast<std::uint64_t>(member)});
}

EnsembleModel train_ensemble(const std::vector<Image2D>& train_set, const std::vector<Image2D>& val_set,
                             const TrainConfig& cfg, std::uint64_t base_seed, int members,
                             const std::vector<UNet<float>>& pretrained, const MemberCallback& on_member) {
    if (members < 2) fail(ErrorKind::Parameter, "ensemble: at least two members are required");
    EnsembleModel ens;
    for (int i = 0; i < members; ++i) {
        const std::uint64_t seed = member_seed(base_seed, i);
        ens.member_seeds.push_back(seed);
        if (static_cast<std::size_t>(i) < pretrained.size()) {
            if (!(pretrained[static_cast<std::size_t>(i)].config() == cfg.unet)) {
                fail(ErrorKind::Parameter, "ensemble: pretrained member has a different configuration");
            }
            ens.members.push_back(pretrained[static_cast<std::size_t>(i)]);
            continue;
        }
        TrainConfig member_cfg = cfg;
        member_cfg.seed = seed;
        TrainResult r = train(train_set, val_set, member_cfg);
        if (on_member) on_member(i, r);
        ens.members.push_back(std::move(r.model));
    }
    return ens;
}

void save_ensemble(const EnsembleModel& ens, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"members", ens.members.size()}, {"seeds", ens.member_seeds}, {"files", nlohmann::json::array()}};
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "member_%03zu.bin", i);
        save_model(ens.members[i], dir / name);
        meta["files"].push_back(name);
    }
    std::ofstream out(dir / "ensemble.json", std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "ensemble.json").string());
    out << meta.dump(2) << '\n';
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, "ensemble directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("member_", 0) == 0 && entry.path().extension() == ".bin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.size() < 2) fail(ErrorKind::Data, "ensemble: fewer than two member files in " + dir.string());
    EnsembleModel ens;
    for (const auto& f : files) ens.members.push_back(load_model<float>(f));
    for (const auto& m : ens.members) {
        if (!(m.config() == ens.members.front().config())) fail(ErrorKind::Data, "ensemble: members differ in configuration");
    }
    std::ifstream meta_in(dir / "ensemble.json");
    if (meta_in) {
        try {
            const auto meta = nlohmann::json::parse(meta_in);
            ens.member_seeds = meta.at("seeds").get<std::vector<std::uint64_t>>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Format, std::string("ensemble.json: ") + e.what());
        }
    }
    return ens;
}

void mean_and_variance(const std::vector<Image2D>& maps, Image2D& mean, Image2D& variance) {
    if (maps.empty()) fail(ErrorKind::Data, "variance of an empty set");
    mean = Image2D::Zero(maps.front().rows(), maps.front().cols());
    for (const Image2D& m : maps) {
        check_same_shape(maps.front(), m, "ensemble");
        mean += m;
    }
    mean /= static_cast<double>(maps.size());
    variance = Image2D::Zero(mean.rows(), mean.cols());
    for (const Image2D& m : maps) variance += (m - mean).square();
    variance /= static_cast<double>(maps.size());
}

EnsembleOutput ensemble_transmission(const EnsembleModel& ens, const Image2D& shot, const Image2D& flat,
                                     const InferenceConfig& cfg) {
    check_same_shape(shot, flat, "ensemble_transmission");
    if (ens.members.empty()) fail(ErrorKind::Data, "ensemble: no members");
    EnsembleOutput out;
    std::vector<Image2D> layers;
    for (const auto& member : ens.members) {
        const Image2D layer = predict_artifact_layer(member, shot, cfg);
        const Image2D clean_flat = clean_image(flat, member, cfg);
        out.member_maps.push_back(reconstruct_transmission(clean_with_layer(shot, layer), clean_flat));
        layers.push_back(layer);
    }
    mean_and_variance(out.member_maps, out.mean, out.variance);
    Image2D layer_mean;
    mean_and_variance(layers, layer_mean, out.layer_variance);
    return out;
}

Image2D entropy_map(const Image2D& variance, const EntropyConfig& cfg) {
    if (!(cfg.variance_floor > 0.0)) fail(ErrorKind::Parameter, "entropy: variance floor must be positive");
    if (variance.size() > 0 && variance.minCoeff() < 0.0) fail(ErrorKind::Domain, "entropy: negative variance");
    const double c = 2.0 * std::numbers::pi * std::numbers::e;
    return 0.5 * (c * variance.max(cfg.variance_floor)).log();
}

OodReport ood_flag(const Image2D& entropy, const Mask2D& signal_mask) {
    if (entropy.rows() != signal_mask.rows() || entropy.cols() != signal_mask.cols()) {
        fail(ErrorKind::Shape, "ood: entropy and mask shapes differ");
    }
    double in_sum = 0.0, out_sum = 0.0;
    Eigen::Index in_n = 0, out_n = 0;
    for (Eigen::Index i = 0; i < entropy.size(); ++i) {
        if (signal_mask.data()[i] != 0) {
            in_sum += entropy.data()[i];
            ++in_n;
        } else {
            out_sum += entropy.data()[i];
            ++out_n;
        }
    }
    if (in_n == 0) fail(ErrorKind::Data, "ood: empty signal mask, flag undefined");
    if (out_n == 0) fail(ErrorKind::EmptyComplement, "ood: mask covers the whole image");
    OodReport r;
    r.mean_inside = in_sum / static_cast<double>(in_n);
    r.mean_outside = out_sum / static_cast<double>(out_n);
    r.ratio = std::exp(r.mean_inside - r.mean_outside);
    r.flagged = r.mean_inside > r.mean_outside;
    return r;
}

}  // namespace xrtm::nn
