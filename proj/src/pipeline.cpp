#include "xrtm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "xrtm/hash.hpp"
#include "xrtm/model_io.hpp"
#include "xrtm/npy.hpp"
#include "xrtm/png.hpp"
#include "xrtm/version.hpp"

namespace xrtm {

namespace fs = std::filesystem;

namespace {

namespace tag {
constexpr std::uint64_t kPatchShot = 101;
constexpr std::uint64_t kInjection = 102;
constexpr std::uint64_t kShock = 103;
constexpr std::uint64_t kShockPatch = 104;
constexpr std::uint64_t kUnet = 105;
constexpr std::uint64_t kShockModel = 106;
constexpr std::uint64_t kParallelAnalysis = 107;
}  // namespace tag

const char* const kKnownMethods[] = {"raw", "fourier", "dffn", "unet", "ensemble"};

bool has_method(const PipelineConfig& cfg, const std::string& m) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
}

[[noreturn]] void stage_fail(const std::string& stage, const Error& e) {
    throw Error(e.kind(), "stage " + stage + ": " + e.what());
}

template <class F>
auto staged(const std::string& stage, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        stage_fail(stage, e);
    }
}

/// Signal bundle whose shot and flat have their own drifts and noise.
GroundTruthBundle signal_bundle(const PipelineConfig& cfg, const Scenario& sc, const SignalPhantom& signal,
                                std::uint64_t tag_id, std::uint64_t index) {
    const DatasetConfig& d = sc.data.config;
    return gen_bundle(sc.data.artifact, sample_drift_for(d, tag_id, index, 0), sample_drift_for(d, tag_id, index, 1),
                      d.base_transmission, signal, derive_seed(cfg.seed, {tag_id, index, seed_tag::kNoiseShot}),
                      derive_seed(cfg.seed, {tag_id, index, seed_tag::kNoiseFlat}), d.noise);
}

Roi filament_rect(const FilamentTruth& f, Eigen::Index margin, Eigen::Index h, Eigen::Index w) {
    const double reach = 3.0 * f.width_sigma + static_cast<double>(margin);
    const auto x0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(std::min(f.base_x, f.tip_x) - reach)));
    const auto y0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(std::min(f.base_y, f.tip_y) - reach)));
    const auto x1 = std::min<Eigen::Index>(w - 1, static_cast<Eigen::Index>(std::ceil(std::max(f.base_x, f.tip_x) + reach)));
    const auto y1 = std::min<Eigen::Index>(h - 1, static_cast<Eigen::Index>(std::ceil(std::max(f.base_y, f.tip_y) + reach)));
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Mask2D roi_mask(const Roi& roi, Eigen::Index h, Eigen::Index w) {
    Mask2D m = Mask2D::Zero(h, w);
    m.block(roi.y0, roi.x0, roi.height, roi.width).setOnes();
    return m;
}

/// Mean of t over ROI pixels outside the mask; the whole complement of the
/// mask when the ROI leaves too few such pixels.
double background_level(const Image2D& t, const Mask2D& mask, const Roi& roi) {
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index y = roi.y0; y < roi.y0 + roi.height; ++y) {
        for (Eigen::Index x = roi.x0; x < roi.x0 + roi.width; ++x) {
            if (mask(y, x) == 0) {
                sum += t(y, x);
                ++n;
            }
        }
    }
    if (n >= 16) return sum / static_cast<double>(n);
    return stat_outside_mask(t, mask).mean;
}

nlohmann::json roi_json(const Roi& r) { return {r.x0, r.y0, r.width, r.height}; }

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace

// ---------------------------------------------------------------- config

nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json j = {
        {"seed", c.seed},
        {"dataset", to_json(c.dataset)},
        {"methods", c.methods},
        {"fourier",
         {{"radius", c.fourier.lowfreq_radius},
          {"percentile", c.fourier.magnitude_percentile},
          {"exclude_dc_region_from_threshold", c.fourier.exclude_dc_region_from_threshold},
          {"percentile_after_mask", c.fourier.percentile_after_mask}}},
        {"parallel_analysis", {{"samples", c.parallel_analysis.samples}, {"percentile", c.parallel_analysis.percentile}}},
        {"dffn", {{"tolerance", c.tv_tolerance}, {"max_iterations", c.tv_max_iterations}}},
        {"unet",
         {{"base_channels", c.unet.unet.base_channels},
          {"depth", c.unet.unet.depth},
          {"epochs", c.unet.epochs},
          {"learning_rate", c.unet.learning_rate},
          {"alpha", c.unet.alpha},
          {"paste_probability", c.unet.paste_probability},
          {"paste_gain", c.unet.paste_gain},
          {"gain_jitter", c.unet.gain_jitter},
          {"pastes_per_image", c.unet.pastes_per_image},
          {"normalize_percentile", c.unet.normalize_percentile},
          {"model_path", c.unet.model_path}}},
        {"patches", {{"n_shots", c.patches.n_shots}, {"contrast", c.patches.contrast}, {"margin", c.patches.margin}}},
        {"injection",
         {{"strong_contrast", c.injection.strong_contrast},
          {"weak_contrast", c.injection.weak_contrast},
          {"n_filaments", c.injection.n_filaments},
          {"roi_margin", c.injection.roi_margin},
          {"lineout_width", c.injection.lineout_width}}},
        {"ensemble", {{"members", c.ensemble_members}, {"dir", c.ensemble_dir}}},
        {"shock",
         {{"area_fraction", c.shock.area_fraction},
          {"contrast", c.shock.contrast},
          {"edge_width", c.shock.edge_width},
          {"thickness", c.shock.thickness},
          {"front_ripple", c.shock.front_ripple},
          {"base_channels", c.shock_base_channels},
          {"model_path", c.shock_model_path}}},
        {"lineout_row", c.lineout_row},
        {"pixel_pitch", c.pixel_pitch ? nlohmann::json(*c.pixel_pitch) : nlohmann::json(nullptr)},
        {"output_dir", c.output_dir},
    };
    return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& input) {
    const nlohmann::json& j = (input.contains("config") && input.contains("command")) ? input.at("config") : input;
    check_keys(j, {"seed", "dataset", "methods", "fourier", "parallel_analysis", "dffn", "unet", "patches", "injection",
                   "ensemble", "shock", "lineout_row", "pixel_pitch", "output_dir"},
               "config");
    PipelineConfig c;
    read_key(j, "seed", c.seed);
    c.dataset.seed = c.seed;
    if (j.contains("dataset")) {
        c.dataset = dataset_config_from_json(j.at("dataset"));
        if (!j.at("dataset").contains("seed")) c.dataset.seed = c.seed;
    }
    read_key(j, "methods", c.methods);
    if (j.contains("fourier")) {
        const auto& f = j.at("fourier");
        check_keys(f, {"radius", "percentile", "exclude_dc_region_from_threshold", "percentile_after_mask"}, "fourier");
        read_key(f, "radius", c.fourier.lowfreq_radius);
        read_key(f, "percentile", c.fourier.magnitude_percentile);
        read_key(f, "exclude_dc_region_from_threshold", c.fourier.exclude_dc_region_from_threshold);
        read_key(f, "percentile_after_mask", c.fourier.percentile_after_mask);
    }
    if (j.contains("parallel_analysis")) {
        const auto& p = j.at("parallel_analysis");
        check_keys(p, {"samples", "percentile"}, "parallel_analysis");
        read_key(p, "samples", c.parallel_analysis.samples);
        read_key(p, "percentile", c.parallel_analysis.percentile);
    }
    if (j.contains("dffn")) {
        const auto& d = j.at("dffn");
        check_keys(d, {"tolerance", "max_iterations"}, "dffn");
        read_key(d, "tolerance", c.tv_tolerance);
        read_key(d, "max_iterations", c.tv_max_iterations);
    }
    if (j.contains("unet")) {
        const auto& u = j.at("unet");
        check_keys(u, {"base_channels", "depth", "epochs", "learning_rate", "alpha", "paste_probability", "paste_gain",
                       "gain_jitter", "pastes_per_image", "normalize_percentile", "model_path"},
                   "unet");
        read_key(u, "base_channels", c.unet.unet.base_channels);
        read_key(u, "depth", c.unet.unet.depth);
        read_key(u, "epochs", c.unet.epochs);
        read_key(u, "learning_rate", c.unet.learning_rate);
        read_key(u, "alpha", c.unet.alpha);
        read_key(u, "paste_probability", c.unet.paste_probability);
        read_key(u, "paste_gain", c.unet.paste_gain);
        read_key(u, "gain_jitter", c.unet.gain_jitter);
        read_key(u, "pastes_per_image", c.unet.pastes_per_image);
        read_key(u, "normalize_percentile", c.unet.normalize_percentile);
        read_key(u, "model_path", c.unet.model_path);
    }
    if (j.contains("patches")) {
        const auto& p = j.at("patches");
        check_keys(p, {"n_shots", "contrast", "margin"}, "patches");
        read_key(p, "n_shots", c.patches.n_shots);
        read_key(p, "contrast", c.patches.contrast);
        read_key(p, "margin", c.patches.margin);
    }
    if (j.contains("injection")) {
        const auto& p = j.at("injection");
        check_keys(p, {"strong_contrast", "weak_contrast", "n_filaments", "roi_margin", "lineout_width"}, "injection");
        read_key(p, "strong_contrast", c.injection.strong_contrast);
        read_key(p, "weak_contrast", c.injection.weak_contrast);
        read_key(p, "n_filaments", c.injection.n_filaments);
        read_key(p, "roi_margin", c.injection.roi_margin);
        read_key(p, "lineout_width", c.injection.lineout_width);
    }
    if (j.contains("ensemble")) {
        const auto& e = j.at("ensemble");
        check_keys(e, {"members", "dir"}, "ensemble");
        read_key(e, "members", c.ensemble_members);
        read_key(e, "dir", c.ensemble_dir);
    }
    if (j.contains("shock")) {
        const auto& s = j.at("shock");
        check_keys(s, {"area_fraction", "contrast", "edge_width", "thickness", "front_ripple", "base_channels", "model_path"},
                   "shock");
        read_key(s, "area_fraction", c.shock.area_fraction);
        read_key(s, "contrast", c.shock.contrast);
        read_key(s, "edge_width", c.shock.edge_width);
        read_key(s, "thickness", c.shock.thickness);
        read_key(s, "front_ripple", c.shock.front_ripple);
        read_key(s, "base_channels", c.shock_base_channels);
        read_key(s, "model_path", c.shock_model_path);
    }
    read_key(j, "lineout_row", c.lineout_row);
    if (j.contains("pixel_pitch") && !j.at("pixel_pitch").is_null()) {
        double pitch = 0.0;
        read_key(j, "pixel_pitch", pitch);
        c.pixel_pitch = pitch;
    }
    read_key(j, "output_dir", c.output_dir);
    validate(c);
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, path.string() + ": " + e.what());
    }
    return pipeline_config_from_json(j);
}

void validate(const PipelineConfig& c) {
    validate(c.dataset);
    if (c.methods.empty()) fail(ErrorKind::Config, "config: method set is empty");
    for (const auto& m : c.methods) {
        if (std::find(std::begin(kKnownMethods), std::end(kKnownMethods), m) == std::end(kKnownMethods)) {
            fail(ErrorKind::Config, "config: unknown method '" + m + "'");
        }
    }
    if (c.unet.epochs < 0) fail(ErrorKind::Config, "config: unet.epochs must be non-negative");
    if (!(c.unet.learning_rate > 0.0)) fail(ErrorKind::Config, "config: unet.learning_rate must be positive");
    if (c.patches.n_shots < 1) fail(ErrorKind::Config, "config: patches.n_shots must be at least 1");
    if (c.ensemble_members < 2 && std::find(c.methods.begin(), c.methods.end(), "ensemble") != c.methods.end()) {
        fail(ErrorKind::Config, "config: ensemble needs at least two members");
    }
    if (c.pixel_pitch && !(*c.pixel_pitch > 0.0)) fail(ErrorKind::Config, "config: pixel_pitch must be positive");
}

int resolved_fourier_radius(const PipelineConfig& cfg) {
    if (cfg.fourier.lowfreq_radius > 0) return cfg.fourier.lowfreq_radius;
    const double side = static_cast<double>(std::min(cfg.dataset.height, cfg.dataset.width));
    return std::max(1, static_cast<int>(std::lround(20.0 * side / 1152.0)));
}

FourierFilterConfig resolved_fourier(const PipelineConfig& cfg) {
    FourierFilterConfig f = cfg.fourier;
    f.lowfreq_radius = resolved_fourier_radius(cfg);
    return f;
}

// ---------------------------------------------------------------- scenario

Image2D signal_residual(const Scenario& sc, const Image2D& shot) {
    const Eigen::Index band = registration_band_rows(shot.rows());
    const Shift s = phase_correlate(sc.cold_mean, shot, Roi{0, 0, shot.cols(), band});
    return residual(shot, sc.cold_mean, s);
}

Scenario build_scenario(const PipelineConfig& cfg) {
    validate(cfg);
    Scenario sc;
    sc.data = staged("dataset", [&] { return make_dataset(cfg.dataset); });
    const auto& cold = sc.data.train.empty() ? sc.data.val : sc.data.train;
    if (cold.empty()) fail(ErrorKind::Config, "stage dataset: no cold shots to average");
    sc.cold_mean = Image2D::Zero(cfg.dataset.height, cfg.dataset.width);
    for (const auto& b : cold) sc.cold_mean += b.shot;
    sc.cold_mean /= static_cast<double>(cold.size());

    staged("patches", [&] {
        FilamentGeometry g = cfg.dataset.filaments;
        g.contrast = cfg.patches.contrast;
        for (int i = 0; i < cfg.patches.n_shots; ++i) {
            const auto idx = static_cast<std::uint64_t>(i);
            const SignalPhantom sig = gen_filament_map(derive_seed(cfg.seed, {tag::kPatchShot, idx, seed_tag::kSignal}),
                                                       cfg.dataset.height, cfg.dataset.width, cfg.dataset.n_filaments, g);
            const GroundTruthBundle b = signal_bundle(cfg, sc, sig, tag::kPatchShot, idx);
            const Image2D r = signal_residual(sc, b.shot);
            std::vector<Roi> rects;
            for (const auto& f : sig.filaments) rects.push_back(filament_rect(f, cfg.patches.margin, r.rows(), r.cols()));
            const PatchBank bank = crop_and_normalize(r, rects, "patch_shot_" + std::to_string(i));
            sc.filament_bank.patches.insert(sc.filament_bank.patches.end(), bank.patches.begin(), bank.patches.end());
        }
        return 0;
    });

    if (!sc.data.flats.empty()) {
        staged("dffn", [&] {
            std::vector<Image2D> flats = shots_of(sc.data.flats);
            sc.eff = compute_effs(flats);
            ParallelAnalysisConfig pa = cfg.parallel_analysis;
            pa.seed = parallel_analysis_seed(cfg);
            sc.pa = parallel_analysis_detailed(flats, sc.eff.eigenvalues, pa);
            sc.eff.K = sc.pa.K;
            return 0;
        });
    }
    return sc;
}

InjectionCase make_injection_case(const PipelineConfig& cfg, const Scenario& sc, const std::string& name,
                                  double contrast, std::uint64_t index) {
    FilamentGeometry g = cfg.dataset.filaments;
    g.contrast = contrast;
    const SignalPhantom sig = gen_filament_map(derive_seed(cfg.seed, {tag::kInjection, index, seed_tag::kSignal}),
                                               cfg.dataset.height, cfg.dataset.width, cfg.injection.n_filaments, g);
    InjectionCase c;
    c.name = name;
    c.contrast = contrast;
    c.bundle = signal_bundle(cfg, sc, sig, tag::kInjection, index);
    c.roi = mask_bounds(c.bundle.signal_mask, cfg.injection.roi_margin);
    if (c.roi.area() == 0) c.roi = Roi{0, 0, cfg.dataset.width, cfg.dataset.height};
    return c;
}

InjectionCase make_shock_case(const PipelineConfig& cfg, const Scenario& sc, std::uint64_t index) {
    const SignalPhantom sig = gen_shock_map(derive_seed(cfg.seed, {tag::kShock, index, seed_tag::kSignal}),
                                            cfg.dataset.height, cfg.dataset.width, cfg.shock);
    InjectionCase c;
    c.name = "shock";
    c.contrast = cfg.shock.contrast;
    c.bundle = signal_bundle(cfg, sc, sig, tag::kShock, index);
    c.roi = mask_bounds(c.bundle.signal_mask, cfg.injection.roi_margin);
    if (c.roi.area() == 0) c.roi = Roi{0, 0, cfg.dataset.width, cfg.dataset.height};
    return c;
}

nn::TrainConfig train_config(const PipelineConfig& cfg, const std::vector<Image2D>& bank, const nn::UNetConfig& unet,
                             std::uint64_t seed) {
    nn::TrainConfig t;
    t.unet = unet;
    t.epochs = cfg.unet.epochs;
    t.seed = seed;
    t.loss.alpha = cfg.unet.alpha;
    t.adam.learning_rate = cfg.unet.learning_rate;
    t.normalize_percentile = cfg.unet.normalize_percentile;
    t.augment.paste_probability = cfg.unet.paste_probability;
    t.augment.paste_gain = cfg.unet.paste_gain;
    t.augment.gain_jitter = cfg.unet.gain_jitter;
    t.augment.pastes_per_image = cfg.unet.pastes_per_image;
    t.augment.patch_bank = bank;
    return t;
}

std::uint64_t unet_seed(const PipelineConfig& cfg) { return derive_seed(cfg.seed, {tag::kUnet}); }

std::uint64_t parallel_analysis_seed(const PipelineConfig& cfg) { return derive_seed(cfg.seed, {tag::kParallelAnalysis}); }

nn::UNet<float> obtain_unet(const PipelineConfig& cfg, const Scenario& sc, std::ostream* log) {
    if (!cfg.unet.model_path.empty()) {
        return staged("unet", [&] { return nn::load_model<float>(cfg.unet.model_path); });
    }
    return staged("unet", [&] {
        const nn::TrainConfig t = train_config(cfg, patch_values(sc.filament_bank), cfg.unet.unet, unet_seed(cfg));
        return nn::train(shots_of(sc.data.train), shots_of(sc.data.val), t, log).model;
    });
}

// ---------------------------------------------------------------- evaluation

const MethodResult& CaseResult::method(const std::string& name) const {
    for (const auto& m : methods) {
        if (m.method == name) return m;
    }
    fail(ErrorKind::NotFound, "case " + icase.name + " has no method " + name);
}

Image2D apply_method(const std::string& method, const InjectionCase& c, const MethodContext& ctx, nlohmann::json* extra,
                     std::optional<Image2D>* entropy) {
    const Image2D& shot = c.bundle.shot;
    const Image2D& flat = c.bundle.flat;
    if (method == "raw") return reconstruct_transmission(shot, flat);
    if (method == "fourier") {
        if (ctx.fourier == nullptr) fail(ErrorKind::Config, "stage fourier: no configuration");
        return staged("fourier", [&] { return filter_and_reconstruct(shot, flat, *ctx.fourier); });
    }
    if (method == "dffn") {
        if (ctx.eff == nullptr || ctx.eff->mean_flat.size() == 0) fail(ErrorKind::Config, "stage dffn: no eigen flat fields");
        return staged("dffn", [&] {
            TvFitConfig tv;
            tv.tolerance = ctx.tv_tolerance;
            tv.max_iterations = ctx.tv_max_iterations;
            tv.mask = roi_mask(c.roi, shot.rows(), shot.cols());
            TvFitResult fit;
            Image2D t = dffn_reconstruct(shot, *ctx.eff, tv, &fit);
            if (extra != nullptr) {
                std::vector<double> w(fit.weights.data(), fit.weights.data() + fit.weights.size());
                *extra = {{"K", ctx.eff->K},
                          {"weights", w},
                          {"iterations", fit.iterations},
                          {"stop_reason", fit.stop_reason},
                          {"objective_initial", fit.objective_trace.empty() ? 0.0 : fit.objective_trace.front()},
                          {"objective_final", fit.objective_trace.empty() ? 0.0 : fit.objective_trace.back()}};
            }
            return t;
        });
    }
    if (method == "unet") {
        if (ctx.unet == nullptr) fail(ErrorKind::Config, "stage unet: no model");
        return staged("unet", [&] { return nn::corrected_transmission(shot, flat, *ctx.unet); });
    }
    if (method == "ensemble") {
        if (ctx.ensemble == nullptr) fail(ErrorKind::Config, "stage ensemble: no ensemble");
        return staged("ensemble", [&] {
            nn::EnsembleOutput out = nn::ensemble_transmission(*ctx.ensemble, shot, flat);
            if (entropy != nullptr) *entropy = nn::entropy_map(out.variance);
            return out.mean;
        });
    }
    fail(ErrorKind::Config, "unknown method '" + method + "'");
}

void score_transmission(MethodResult& r, const Image2D& truth, const Mask2D& mask, const Roi& roi,
                        const std::vector<FilamentSpec>& filaments, const std::vector<double>& truth_lengths,
                        const LengthConfig& lengths) {
    check_same_shape(r.transmission, truth, "score_transmission");
    if (mask.rows() != truth.rows() || mask.cols() != truth.cols()) fail(ErrorKind::Shape, "score_transmission: mask shape");
    if (!truth_lengths.empty() && truth_lengths.size() != filaments.size()) {
        fail(ErrorKind::Parameter, "score_transmission: one truth length per filament");
    }
    const double level = background_level(r.transmission, mask, roi);
    if (!(level > 0.0)) fail(ErrorKind::Numerical, "stage eval: non-positive background level for " + r.method);
    r.recovered = r.transmission / level;

    r.report.mssim = mssim(r.recovered, truth, roi);
    r.report.mse = mse(r.recovered, truth, roi);
    r.report.psnr = psnr(r.recovered, truth, roi);
    r.report.sigma_t_outside = stat_outside_mask(r.transmission, mask).std;
    r.sigma_recovered_outside = stat_outside_mask(r.recovered, mask).std;

    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask.data()[i] == 0) continue;
        num += std::abs(r.recovered.data()[i] - 1.0);
        den += std::abs(truth.data()[i] - 1.0);
    }
    r.amplitude_ratio = den > 0.0 ? num / den : 0.0;

    r.report.filament_lengths.clear();
    std::vector<double> measured;
    for (const auto& f : filaments) {
        FilamentLength fl{f.id, std::nullopt};
        try {
            fl.length = measure_filament_length(r.recovered, f, 1.0, lengths);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NotFound) throw;
        }
        // A filament that cannot be found counts as length zero.
        measured.push_back(fl.length.value_or(0.0));
        r.report.filament_lengths.push_back(fl);
    }
    if (!filaments.empty() && !truth_lengths.empty()) r.report.rmspe = rmspe(measured, truth_lengths);
}

MethodResult evaluate_method(const std::string& method, const InjectionCase& c, const MethodContext& ctx,
                             const LengthConfig& lengths) {
    MethodResult r;
    r.method = method;
    r.transmission = apply_method(method, c, ctx, &r.extra, &r.entropy);
    const GroundTruthBundle& b = c.bundle;
    std::vector<FilamentSpec> specs;
    std::vector<double> truth;
    for (const auto& f : b.filaments) {
        specs.push_back(spec_from_truth(f));
        truth.push_back(f.length);
    }
    score_transmission(r, b.signal_map, b.signal_mask, c.roi, specs, truth, lengths);
    if (r.entropy) r.ood = nn::ood_flag(*r.entropy, b.signal_mask);
    return r;
}

CaseResult evaluate_case(const InjectionCase& c, const std::vector<std::string>& methods, const MethodContext& ctx,
                         Eigen::Index lineout_row) {
    CaseResult r;
    r.icase = c;
    for (const auto& m : methods) r.methods.push_back(evaluate_method(m, c, ctx));
    if (lineout_row < 0) {
        const auto& fil = c.bundle.filaments;
        if (!fil.empty()) {
            double y = 0.0;
            for (const auto& f : fil) y += 0.5 * (f.base_y + f.tip_y);
            lineout_row = static_cast<Eigen::Index>(std::lround(y / static_cast<double>(fil.size())));
        } else {
            lineout_row = c.roi.y0 + c.roi.height / 2;
        }
    }
    r.lineout_row = std::clamp<Eigen::Index>(lineout_row, 0, c.bundle.shot.rows() - 1);
    return r;
}

nlohmann::json to_json(const CaseResult& r, const std::optional<double>& pixel_pitch) {
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& m : r.methods) {
        nlohmann::json e = to_json(m.report);
        e["sigma_recovered_outside"] = m.sigma_recovered_outside;
        e["amplitude_ratio"] = m.amplitude_ratio;
        if (m.ood) {
            e["ood"] = {{"mean_inside", m.ood->mean_inside},
                        {"mean_outside", m.ood->mean_outside},
                        {"ratio", m.ood->ratio},
                        {"flagged", m.ood->flagged}};
        }
        if (!m.extra.is_null()) e["details"] = m.extra;
        methods[m.method] = e;
    }
    std::vector<double> truth;
    for (const auto& f : r.icase.bundle.filaments) truth.push_back(f.length);
    nlohmann::json j = {{"case", r.icase.name},
                        {"contrast", r.icase.contrast},
                        {"roi", roi_json(r.icase.roi)},
                        {"lineout_row", r.lineout_row},
                        {"truth_lengths", truth},
                        {"methods", methods}};
    if (pixel_pitch) j["lineout_y_um"] = static_cast<double>(r.lineout_row) * *pixel_pitch;
    return j;
}

void write_case_outputs(const CaseResult& r, const fs::path& dir) {
    fs::create_directories(dir);
    const GroundTruthBundle& b = r.icase.bundle;
    save_npy(b.shot, dir / "shot.npy");
    save_npy(b.flat, dir / "flat.npy");
    save_npy(b.signal_map, dir / "signal.npy");
    save_mask_npy(b.signal_mask, dir / "mask.npy");
    save_png(b.signal_map, dir / "signal.png");
    for (const auto& m : r.methods) {
        save_npy(m.transmission, dir / (m.method + "_T.npy"));
        save_png(m.transmission, dir / (m.method + "_T.png"));
        save_npy(m.recovered, dir / (m.method + "_recovered.npy"));
        if (m.entropy) {
            save_npy(*m.entropy, dir / (m.method + "_entropy.npy"));
            save_png(*m.entropy, dir / (m.method + "_entropy.png"), true);
        }
    }

    std::ofstream lo(dir / "lineouts.csv", std::ios::trunc);
    if (!lo) fail(ErrorKind::Io, "cannot write lineouts.csv");
    lo.precision(10);
    lo << "x,truth";
    for (const auto& m : r.methods) lo << ',' << m.method;
    lo << '\n';
    for (Eigen::Index x = 0; x < b.signal_map.cols(); ++x) {
        lo << x << ',' << b.signal_map(r.lineout_row, x);
        for (const auto& m : r.methods) lo << ',' << m.recovered(r.lineout_row, x);
        lo << '\n';
    }

    if (!b.filaments.empty()) {
        std::ofstream lc(dir / "lengths.csv", std::ios::trunc);
        if (!lc) fail(ErrorKind::Io, "cannot write lengths.csv");
        lc.precision(10);
        lc << "id,truth";
        for (const auto& m : r.methods) lc << ',' << m.method;
        lc << '\n';
        for (std::size_t i = 0; i < b.filaments.size(); ++i) {
            lc << b.filaments[i].id << ',' << b.filaments[i].length;
            for (const auto& m : r.methods) {
                lc << ',';
                if (m.report.filament_lengths[i].length) lc << *m.report.filament_lengths[i].length;
            }
            lc << '\n';
        }
    }
}

void write_table_csv(const std::vector<CaseResult>& cases, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(10);
    out << "case,method,mssim,psnr,mse,sigma_t_outside,rmspe\n";
    for (const auto& c : cases) {
        for (const auto& m : c.methods) {
            out << c.icase.name << ',' << m.method << ',' << m.report.mssim << ',';
            if (std::isfinite(m.report.psnr)) out << m.report.psnr;
            else out << "inf";
            out << ',' << m.report.mse << ',' << m.report.sigma_t_outside << ',';
            if (m.report.rmspe) out << *m.report.rmspe;
            out << '\n';
        }
    }
}

void write_run_record(const fs::path& dir, const RunRecord& r) {
    nlohmann::json in = nlohmann::json::object();
    for (const auto& p : r.inputs) in[p.generic_string()] = hash_file(p);

    auto is_log = [&](const fs::path& p) {
        for (const auto& l : r.logs) {
            if (fs::weakly_canonical(l) == fs::weakly_canonical(p)) return true;
        }
        return false;
    };
    std::vector<fs::path> files;
    if (r.outputs) {
        for (const auto& p : *r.outputs) files.push_back(fs::relative(p, dir));
    } else {
        for (const auto& e : fs::recursive_directory_iterator(dir)) {
            if (!e.is_regular_file() || is_log(e.path())) continue;
            const fs::path rel = fs::relative(e.path(), dir);
            if (rel != "run.json") files.push_back(rel);
        }
    }
    std::sort(files.begin(), files.end());
    nlohmann::json out = nlohmann::json::object();
    for (const auto& rel : files) out[rel.generic_string()] = hash_file(dir / rel);

    nlohmann::json log_list = nlohmann::json::array();
    for (const auto& l : r.logs) log_list.push_back(fs::relative(l, dir).generic_string());

    nlohmann::json seeds = {{"master", r.config.value("seed", std::uint64_t{0})}};
    if (r.config.contains("dataset") && r.config.at("dataset").contains("seed")) {
        seeds["dataset"] = r.config.at("dataset").at("seed");
    }
    write_json(dir / "run.json", {{"command", r.command},
                                  {"version", kVersion},
                                  {"hash", "fnv1a64"},
                                  {"config", r.config},
                                  {"args", r.args},
                                  {"seeds", seeds},
                                  {"inputs", in},
                                  {"outputs", out},
                                  {"logs", log_list}});
}

// ---------------------------------------------------------------- runs

namespace {

struct Models {
    std::optional<nn::UNet<float>> unet;
    std::optional<nn::EnsembleModel> ensemble;
    std::vector<fs::path> inputs;
    std::vector<fs::path> logs;
};

Models prepare_models(const PipelineConfig& cfg, const Scenario& sc, const fs::path& out) {
    Models m;
    const bool need_unet = has_method(cfg, "unet") || (has_method(cfg, "ensemble") && cfg.ensemble_dir.empty());
    if (need_unet) {
        if (cfg.unet.model_path.empty()) {
            const fs::path log_path = out / "train_log.jsonl";
            std::ofstream log(log_path, std::ios::trunc);
            m.unet = obtain_unet(cfg, sc, &log);
            m.logs.push_back(log_path);
            nn::save_model(*m.unet, out / "unet.bin");
        } else {
            m.unet = obtain_unet(cfg, sc);
            m.inputs.push_back(cfg.unet.model_path);
        }
    }
    if (has_method(cfg, "ensemble")) {
        if (!cfg.ensemble_dir.empty()) {
            m.ensemble = staged("ensemble", [&] { return nn::load_ensemble(cfg.ensemble_dir); });
            for (const auto& e : fs::directory_iterator(cfg.ensemble_dir)) {
                if (e.is_regular_file()) m.inputs.push_back(e.path());
            }
            std::sort(m.inputs.begin(), m.inputs.end());
        } else {
            m.ensemble = staged("ensemble", [&] {
                const nn::TrainConfig t = train_config(cfg, patch_values(sc.filament_bank), cfg.unet.unet, unet_seed(cfg));
                return nn::train_ensemble(shots_of(sc.data.train), shots_of(sc.data.val), t, unet_seed(cfg),
                                          cfg.ensemble_members, {*m.unet});
            });
            nn::save_ensemble(*m.ensemble, out / "ensemble");
        }
    }
    return m;
}

MethodContext context_for(const PipelineConfig& cfg, const Scenario& sc, const Models& m, const FourierFilterConfig& f) {
    MethodContext ctx;
    ctx.fourier = &f;
    ctx.eff = &sc.eff;
    ctx.tv_tolerance = cfg.tv_tolerance;
    ctx.tv_max_iterations = cfg.tv_max_iterations;
    ctx.unet = m.unet ? &*m.unet : nullptr;
    ctx.ensemble = m.ensemble ? &*m.ensemble : nullptr;
    return ctx;
}

CompareSummary run_cases(const PipelineConfig& cfg, const std::string& command,
                         const std::vector<std::pair<std::string, double>>& cases) {
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    const Scenario sc = build_scenario(cfg);
    const Models models = prepare_models(cfg, sc, out);
    const FourierFilterConfig fourier = resolved_fourier(cfg);
    const MethodContext ctx = context_for(cfg, sc, models, fourier);

    CompareSummary s;
    s.report = {{"command", command},
                {"fourier_radius", fourier.lowfreq_radius},
                {"dffn_K", sc.eff.K},
                {"eigenvalues", sc.eff.eigenvalues},
                {"patch_bank_size", sc.filament_bank.patches.size()},
                {"cases", nlohmann::json::array()}};
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const InjectionCase c = make_injection_case(cfg, sc, cases[i].first, cases[i].second, i);
        CaseResult r = evaluate_case(c, cfg.methods, ctx, cfg.lineout_row);
        write_case_outputs(r, out / c.name);
        s.report["cases"].push_back(to_json(r, cfg.pixel_pitch));
        s.cases.push_back(std::move(r));
    }
    write_json(out / (command + ".json"), s.report);
    write_table_csv(s.cases, out / (command + ".csv"));
    write_run_record(out, {command, to_json(cfg), nlohmann::json::object(), models.inputs, std::nullopt, models.logs});
    return s;
}

}  // namespace

CompareSummary run_compare(const PipelineConfig& cfg) {
    return run_cases(cfg, "compare", {{"strong", cfg.injection.strong_contrast}});
}

CompareSummary run_injection_test(const PipelineConfig& cfg) {
    return run_cases(cfg, "inject-test", {{"strong", cfg.injection.strong_contrast}, {"weak", cfg.injection.weak_contrast}});
}

CompareSummary run_shock_generalization(const PipelineConfig& cfg) {
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    const Scenario sc = build_scenario(cfg);

    PipelineConfig filament_cfg = cfg;
    filament_cfg.methods = {"unet"};
    if (has_method(cfg, "ensemble")) filament_cfg.methods.push_back("ensemble");
    Models models = prepare_models(filament_cfg, sc, out);

    nn::UNet<float> shock_model = staged("shock-model", [&] {
        if (!cfg.shock_model_path.empty()) {
            models.inputs.push_back(cfg.shock_model_path);
            return nn::load_model<float>(cfg.shock_model_path);
        }
        const SignalPhantom sig = gen_shock_map(derive_seed(cfg.seed, {tag::kShockPatch, 0, seed_tag::kSignal}),
                                                cfg.dataset.height, cfg.dataset.width, cfg.shock);
        const GroundTruthBundle b = signal_bundle(cfg, sc, sig, tag::kShockPatch, 0);
        const Roi region = mask_bounds(sig.mask, 0);
        if (region.area() == 0) fail(ErrorKind::Geometry, "shock phantom has an empty mask");
        const PatchBank shock_bank = split_shock_patches(crop(signal_residual(sc, b.shot), region), "shock_shot");
        std::vector<Image2D> bank = patch_values(sc.filament_bank);
        for (const auto& p : shock_bank.patches) bank.push_back(p.values);
        nn::UNetConfig ucfg = cfg.unet.unet;
        ucfg.base_channels = cfg.shock_base_channels;
        const fs::path log_path = out / "train_log_shock.jsonl";
        std::ofstream log(log_path, std::ios::trunc);
        models.logs.push_back(log_path);
        nn::UNet<float> m = nn::train(shots_of(sc.data.train), shots_of(sc.data.val),
                                      train_config(cfg, bank, ucfg, derive_seed(cfg.seed, {tag::kShockModel})), &log)
                                .model;
        nn::save_model(m, out / "unet_shock.bin");
        return m;
    });

    const FourierFilterConfig fourier = resolved_fourier(cfg);
    MethodContext ctx = context_for(cfg, sc, models, fourier);
    const InjectionCase shock = make_shock_case(cfg, sc, 0);

    CaseResult r;
    r.icase = shock;
    r.methods.push_back(evaluate_method("raw", shock, ctx));
    MethodResult filament_result = evaluate_method("unet", shock, ctx);
    filament_result.method = "unet_filament";
    r.methods.push_back(std::move(filament_result));
    MethodContext shock_ctx = ctx;
    shock_ctx.unet = &shock_model;
    MethodResult shock_result = evaluate_method("unet", shock, shock_ctx);
    shock_result.method = "unet_shock";
    r.methods.push_back(std::move(shock_result));

    CompareSummary s;
    nlohmann::json summary = {
        {"mssim_filament_model", r.method("unet_filament").report.mssim},
        {"mssim_shock_model", r.method("unet_shock").report.mssim},
        {"psnr_filament_model", r.method("unet_filament").report.psnr},
        {"psnr_shock_model", r.method("unet_shock").report.psnr},
        {"shock_aware_not_worse", r.method("unet_shock").report.mssim >= r.method("unet_filament").report.mssim},
    };
    if (ctx.ensemble != nullptr) {
        r.methods.push_back(evaluate_method("ensemble", shock, ctx));
        const InjectionCase strong = make_injection_case(cfg, sc, "strong", cfg.injection.strong_contrast, 0);
        const InjectionCase weak = make_injection_case(cfg, sc, "weak", cfg.injection.weak_contrast, 1);
        CaseResult fs_strong = evaluate_case(strong, {"ensemble"}, ctx, cfg.lineout_row);
        CaseResult fs_weak = evaluate_case(weak, {"ensemble"}, ctx, cfg.lineout_row);
        const double filament_avg = 0.5 * (fs_strong.methods[0].ood->ratio + fs_weak.methods[0].ood->ratio);
        const double shock_ratio = r.method("ensemble").ood->ratio;
        summary["entropy_ratio_shock"] = shock_ratio;
        summary["entropy_ratio_filament_mean"] = filament_avg;
        summary["shock_ratio_exceeds_filament"] = shock_ratio > filament_avg;
        s.cases.push_back(std::move(fs_strong));
        s.cases.push_back(std::move(fs_weak));
    }
    r.lineout_row = shock.roi.y0 + shock.roi.height / 2;
    write_case_outputs(r, out / "shock");
    s.report = {{"command", "shock"}, {"summary", summary}, {"case", to_json(r, cfg.pixel_pitch)}};
    s.cases.insert(s.cases.begin(), std::move(r));
    write_json(out / "shock.json", s.report);
    write_table_csv(s.cases, out / "shock.csv");
    write_run_record(out, {"shock-test", to_json(cfg), nlohmann::json::object(), models.inputs, std::nullopt, models.logs});
    return s;
}

}  // namespace xrtm
