#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xrtm/dataset.hpp"
#include "xrtm/dffn.hpp"
#include "xrtm/ensemble.hpp"
#include "xrtm/features.hpp"
#include "xrtm/fourier_filter.hpp"
#include "xrtm/inference.hpp"
#include "xrtm/metrics.hpp"
#include "xrtm/model_io.hpp"
#include "xrtm/npy.hpp"
#include "xrtm/pipeline.hpp"
#include "xrtm/png.hpp"
#include "xrtm/version.hpp"

namespace fs = std::filesystem;
using namespace xrtm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config:
        case ErrorKind::Parameter:
        case ErrorKind::Domain:
        case ErrorKind::Geometry:
        case ErrorKind::Shape:
            return kExitConfig;
        case ErrorKind::Io:
        case ErrorKind::Format:
        case ErrorKind::NotFound:
            return kExitIo;
        default:
            return kExitNumerical;
    }
}

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
};

PipelineConfig resolve(const Globals& g) {
    PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.dataset.seed = *g.seed;
    }
    if (!g.out.empty()) cfg.output_dir = g.out;
    return cfg;
}

/// --out is either a directory or, when it has an extension, the primary
/// output file; side outputs and run.json go next to it.
struct Target {
    fs::path dir;
    fs::path file;
};

Target target(const std::string& out, const std::string& fallback_dir, const std::string& default_name) {
    Target t;
    const fs::path p = out.empty() ? fs::path(fallback_dir) : fs::path(out);
    if (p.has_extension()) {
        t.file = p;
        t.dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    } else {
        t.dir = p;
        t.file = p / default_name;
    }
    fs::create_directories(t.dir);
    return t;
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
    return file.parent_path() / (file.stem().string() + suffix);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

/// NPY plus a PNG heatmap with the same stem.
std::vector<fs::path> save_image(const Image2D& img, const fs::path& npy, bool log_png = false) {
    save_npy(img, npy);
    fs::path png = npy;
    png.replace_extension(".png");
    save_png(img, png, log_png);
    return {npy, png};
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) fail(ErrorKind::Config, std::string("missing --") + what);
    if (!fs::exists(path)) fail(ErrorKind::Io, std::string(what) + " not found: " + path);
}

Roi parse_rect(const std::string& text) {
    Roi r;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%ld,%ld,%ld,%ld%c", &r.x0, &r.y0, &r.width, &r.height, &tail) != 4) {
        fail(ErrorKind::Config, "expected x0,y0,width,height, got '" + text + "'");
    }
    return r;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

std::pair<double, double> read_pair(const nlohmann::json& e, const char* key, const char* kx, const char* ky) {
    if (e.contains(key)) {
        const auto v = e.at(key).get<std::vector<double>>();
        if (v.size() != 2) fail(ErrorKind::Format, std::string("filament ") + key + " needs two entries");
        return {v[0], v[1]};
    }
    return {e.at(kx).get<double>(), e.at(ky).get<double>()};
}

/// Filament specs from a JSON list (or an object with a "filaments" list, as
/// in a dataset manifest test entry). A "length" field is the truth length.
void read_filaments(const fs::path& path, std::vector<FilamentSpec>& specs, std::vector<double>& truth) {
    nlohmann::json j = read_json(path);
    if (j.is_object() && j.contains("filaments")) j = j.at("filaments");
    if (!j.is_array()) fail(ErrorKind::Format, path.string() + ": expected a list of filaments");
    try {
        bool all_lengths = true;
        for (const auto& e : j) {
            FilamentSpec s;
            s.id = e.value("id", static_cast<int>(specs.size()) + 1);
            std::tie(s.base_x, s.base_y) = read_pair(e, "base", "base_x", "base_y");
            std::tie(s.axis_x, s.axis_y) = read_pair(e, "axis", "axis_x", "axis_y");
            const double norm = std::hypot(s.axis_x, s.axis_y);
            if (!(norm > 0.0)) fail(ErrorKind::Format, "filament axis must be nonzero");
            s.axis_x /= norm;
            s.axis_y /= norm;
            s.width = e.value("width", s.width);
            s.polarity = e.value("polarity", s.polarity);
            if (e.contains("length")) {
                truth.push_back(e.at("length").get<double>());
                s.max_length = e.value("max_length", truth.back() + 20.0);
            } else {
                all_lengths = false;
                s.max_length = e.value("max_length", s.max_length);
            }
            specs.push_back(s);
        }
        if (!all_lengths) truth.clear();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

ImageStack read_flats(const fs::path& dir, std::vector<fs::path>& inputs) {
    if (fs::exists(dir / "manifest.json")) {
        inputs.push_back(dir / "manifest.json");
        return load_split(dir, "flats");
    }
    if (!fs::is_directory(dir)) fail(ErrorKind::Io, "flats directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".npy") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    ImageStack flats;
    for (const auto& f : files) {
        flats.push_back(load_npy(f));
        inputs.push_back(f);
    }
    return flats;
}

/// Training and validation cold shots plus the patch bank, either from a
/// dataset directory and saved bank or regenerated from the config.
struct TrainingInputs {
    std::vector<Image2D> train, val;
    std::vector<Image2D> bank;
    std::vector<fs::path> files;
};

TrainingInputs training_inputs(const PipelineConfig& cfg, const std::string& data_dir, const std::string& patch_dir) {
    TrainingInputs in;
    std::optional<Scenario> sc;
    if (data_dir.empty() || patch_dir.empty()) sc = build_scenario(cfg);
    if (!data_dir.empty()) {
        in.train = load_split(data_dir, "train");
        in.val = load_split(data_dir, "val");
        in.files.push_back(fs::path(data_dir) / "manifest.json");
    } else {
        in.train = shots_of(sc->data.train);
        in.val = shots_of(sc->data.val);
    }
    if (!patch_dir.empty()) {
        in.bank = patch_values(load_patch_bank(patch_dir));
        in.files.push_back(fs::path(patch_dir) / "bank.json");
    } else {
        in.bank = patch_values(sc->filament_bank);
    }
    return in;
}

std::vector<fs::path> files_under(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structured-artifact suppression for X-ray transmission maps"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "JSON configuration, or a run.json to replay its config");
    app.add_option("--seed", g.seed, "Master seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory, or output file for single-result commands");
    app.add_option("--threads", g.threads, "Accepted for compatibility; computation is single-threaded")
        ->check(CLI::PositiveNumber);

    std::string data_dir, patch_dir, model_path, ensemble_dir, shot_path, flat_path, flats_dir, mask_path, truth_path,
        test_path, roi_text, filaments_path, cold_path, region_text, rects_path, report_path, entropy_path, png_path,
        lengths_csv;
    std::optional<int> epochs, members, radius;
    std::optional<double> lr, alpha, paste_prob, percentile;
    bool shock_split = false;

    auto* phantom_gen = app.add_subcommand("phantom-gen", "Generate the synthetic dataset");

    auto add_training = [&](CLI::App* c) {
        c->add_option("--data", data_dir, "Dataset directory from phantom-gen");
        c->add_option("--patches", patch_dir, "Patch bank directory from extract-patches");
        c->add_option("--epochs", epochs);
        c->add_option("--lr", lr);
        c->add_option("--alpha", alpha, "Signal weight of the L1 loss");
        c->add_option("--paste-prob", paste_prob);
    };
    auto* train_cmd = app.add_subcommand("train", "Train one U-Net");
    add_training(train_cmd);
    auto* ens_train = app.add_subcommand("ensemble-train", "Train a deep ensemble");
    add_training(ens_train);
    ens_train->add_option("--members", members);

    auto* infer = app.add_subcommand("infer", "Correct a shot/flat pair with a trained model");
    infer->add_option("--model", model_path)->required();
    infer->add_option("--shot", shot_path)->required();
    infer->add_option("--flat", flat_path)->required();

    auto* fourier = app.add_subcommand("fourier", "Fourier filter correction");
    fourier->add_option("--shot", shot_path)->required();
    fourier->add_option("--flat", flat_path)->required();
    fourier->add_option("--radius", radius, "Low-frequency mask radius in pixels");
    fourier->add_option("--percentile", percentile, "Magnitude threshold percentile");

    auto* dffn = app.add_subcommand("dffn", "Dynamic flat-field normalization");
    dffn->add_option("--shot", shot_path)->required();
    dffn->add_option("--flats", flats_dir, "Directory of flat NPY files or a phantom-gen dataset")->required();
    dffn->add_option("--mask", mask_path, "Pixels excluded from the total variation");
    dffn->add_option("--report", report_path);

    auto* inject = app.add_subcommand("inject-test", "Strong and weak injection tests");

    auto* eval = app.add_subcommand("eval", "Score a transmission map against a signal map");
    eval->add_option("--truth", truth_path, "Ground-truth signal map")->required();
    eval->add_option("--test", test_path, "Transmission map to score")->required();
    eval->add_option("--mask", mask_path, "Signal mask (default: truth != 1)");
    eval->add_option("--roi", roi_text, "x0,y0,width,height");
    eval->add_option("--filaments", filaments_path, "Filament specs JSON");
    eval->add_option("--lengths-csv", lengths_csv);

    auto* entropy = app.add_subcommand("ensemble-entropy", "Ensemble mean, variance and entropy maps");
    entropy->add_option("--models,--ensemble", ensemble_dir)->required();
    entropy->add_option("--shot", shot_path)->required();
    entropy->add_option("--flat", flat_path)->required();
    entropy->add_option("--mask", mask_path, "Signal mask for the OOD ratio");
    entropy->add_option("--out-entropy", entropy_path);
    entropy->add_option("--out-png", png_path);
    entropy->add_option("--report", report_path);

    auto* extract = app.add_subcommand("extract-patches", "Build a patch bank");
    extract->add_option("--shot", shot_path, "Signal shot; without it the configured synthetic bank is built");
    extract->add_option("--cold-mean", cold_path);
    extract->add_option("--region", region_text, "Registration region x0,y0,width,height");
    extract->add_option("--rects", rects_path, "JSON list of [x0, y0, width, height]");
    extract->add_flag("--shock", shock_split, "Split the single rect into a 2x3 grid");

    auto* compare = app.add_subcommand("compare", "All methods on the strong injection case");
    auto* shock = app.add_subcommand("shock-test", "Filament-trained vs shock-aware model on a shock phantom");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        PipelineConfig cfg = resolve(g);
        if (epochs) cfg.unet.epochs = *epochs;
        if (lr) cfg.unet.learning_rate = *lr;
        if (alpha) cfg.unet.alpha = *alpha;
        if (paste_prob) cfg.unet.paste_probability = *paste_prob;
        if (members) cfg.ensemble_members = *members;
        if (radius) cfg.fourier.lowfreq_radius = *radius;
        if (percentile) cfg.fourier.magnitude_percentile = *percentile;
        validate(cfg);

        RunRecord rec;
        auto finish = [&](const fs::path& dir, const std::string& cmd) {
            rec.command = cmd;
            rec.config = to_json(cfg);
            write_run_record(dir, rec);
        };

        if (*phantom_gen) {
            const Target t = target(g.out, cfg.output_dir, "");
            write_dataset(make_dataset(cfg.dataset), t.dir);
            finish(t.dir, "phantom-gen");
        } else if (*train_cmd) {
            const Target t = target(g.out, cfg.output_dir, "unet.bin");
            rec.args = {{"data", data_dir}, {"patches", patch_dir}};
            const TrainingInputs in = training_inputs(cfg, data_dir, patch_dir);
            const fs::path log_path = sibling(t.file, "_train_log.jsonl");
            {
                std::ofstream log(log_path, std::ios::trunc);
                const auto tc = train_config(cfg, in.bank, cfg.unet.unet, unet_seed(cfg));
                nn::save_model(nn::train(in.train, in.val, tc, &log).model, t.file);
            }
            rec.inputs = in.files;
            rec.outputs = std::vector<fs::path>{t.file};
            rec.logs = {log_path};
            finish(t.dir, "train");
        } else if (*ens_train) {
            const Target t = target(g.out, cfg.output_dir, "");
            rec.args = {{"data", data_dir}, {"patches", patch_dir}};
            const TrainingInputs in = training_inputs(cfg, data_dir, patch_dir);
            const fs::path log_path = t.dir / "train_log.jsonl";
            std::ofstream log(log_path, std::ios::trunc);
            const auto seed = unet_seed(cfg);
            const nn::EnsembleModel ens = nn::train_ensemble(
                in.train, in.val, train_config(cfg, in.bank, cfg.unet.unet, seed), seed, cfg.ensemble_members, {},
                [&](int i, const nn::TrainResult& r) {
                    for (const auto& e : r.log) {
                        log << nlohmann::json{{"member", i}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                                              {"val_loss", e.val_loss}, {"wall_time", e.wall_time}}
                                   .dump()
                            << '\n';
                    }
                    log.flush();
                    std::cerr << "member " << i + 1 << "/" << cfg.ensemble_members << " trained\n";
                });
            log.close();
            nn::save_ensemble(ens, t.dir / "ensemble");
            rec.inputs = in.files;
            rec.logs = {log_path};
            finish(t.dir, "ensemble-train");
        } else if (*infer) {
            const Target t = target(g.out, cfg.output_dir, "T.npy");
            rec.args = {{"model", model_path}, {"shot", shot_path}, {"flat", flat_path}};
            require_file(model_path, "model");
            const auto model = nn::load_model<float>(model_path);
            const Image2D shot = load_npy(shot_path), flat = load_npy(flat_path);
            std::vector<fs::path> outs = save_image(nn::corrected_transmission(shot, flat, model), t.file);
            for (const auto& p : save_image(nn::predict_artifact_layer(model, shot), sibling(t.file, "_layer_shot.npy"))) {
                outs.push_back(p);
            }
            for (const auto& p : save_image(nn::predict_artifact_layer(model, flat), sibling(t.file, "_layer_flat.npy"))) {
                outs.push_back(p);
            }
            rec.inputs = {model_path, shot_path, flat_path};
            rec.outputs = outs;
            finish(t.dir, "infer");
        } else if (*fourier) {
            const Target t = target(g.out, cfg.output_dir, "T.npy");
            rec.args = {{"shot", shot_path}, {"flat", flat_path}};
            const Image2D shot = load_npy(shot_path), flat = load_npy(flat_path);
            PipelineConfig sized = cfg;
            sized.dataset.height = shot.rows();
            sized.dataset.width = shot.cols();
            const FourierFilterConfig f = resolved_fourier(sized);
            FourierFilterDiagnostics ds, df;
            const Image2D fs_ = filter_image(shot, f, &ds);
            const Image2D ff = filter_image(flat, f, &df);
            std::vector<fs::path> outs = save_image(reconstruct_transmission(fs_, ff), t.file);
            auto diag = [](const FourierFilterDiagnostics& d) {
                return nlohmann::json{{"threshold", d.threshold},
                                      {"lowfreq_zeroed", d.lowfreq_zeroed},
                                      {"threshold_zeroed", d.threshold_zeroed},
                                      {"imag_residue", d.imag_residue}};
            };
            const fs::path report = sibling(t.file, "_fourier.json");
            write_json(report, {{"radius", f.lowfreq_radius},
                                {"percentile", f.magnitude_percentile},
                                {"shot", diag(ds)},
                                {"flat", diag(df)}});
            outs.push_back(report);
            rec.inputs = {shot_path, flat_path};
            rec.outputs = outs;
            finish(t.dir, "fourier");
        } else if (*dffn) {
            const Target t = target(g.out, cfg.output_dir, "T.npy");
            rec.args = {{"shot", shot_path}, {"flats", flats_dir}, {"mask", mask_path}};
            const Image2D shot = load_npy(shot_path);
            rec.inputs = {shot_path};
            const ImageStack flats = read_flats(flats_dir, rec.inputs);
            EffModel eff = compute_effs(flats);
            ParallelAnalysisConfig pa = cfg.parallel_analysis;
            pa.seed = parallel_analysis_seed(cfg);
            eff.K = parallel_analysis(flats, eff.eigenvalues, pa);
            TvFitConfig tv;
            tv.tolerance = cfg.tv_tolerance;
            tv.max_iterations = cfg.tv_max_iterations;
            if (!mask_path.empty()) {
                tv.mask = load_mask_npy(mask_path);
                rec.inputs.push_back(mask_path);
            }
            TvFitResult fit;
            std::vector<fs::path> outs = save_image(dffn_reconstruct(shot, eff, tv, &fit), t.file);
            const fs::path report = report_path.empty() ? sibling(t.file, "_dffn.json") : fs::path(report_path);
            std::vector<double> w(fit.weights.data(), fit.weights.data() + fit.weights.size());
            write_json(report, {{"K", eff.K},
                                {"eigenvalues", eff.eigenvalues},
                                {"weights", w},
                                {"iterations", fit.iterations},
                                {"converged", fit.converged},
                                {"stop_reason", fit.stop_reason},
                                {"objective", fit.objective_trace}});
            outs.push_back(report);
            rec.outputs = outs;
            finish(t.dir, "dffn");
        } else if (*inject) {
            std::cout << run_injection_test(cfg).report.dump(2) << '\n';
        } else if (*compare) {
            std::cout << run_compare(cfg).report.dump(2) << '\n';
        } else if (*shock) {
            std::cout << run_shock_generalization(cfg).report.at("summary").dump(2) << '\n';
        } else if (*eval) {
            const Target t = target(g.out, cfg.output_dir, "report.json");
            rec.args = {{"truth", truth_path}, {"test", test_path}, {"mask", mask_path}, {"roi", roi_text},
                        {"filaments", filaments_path}};
            MethodResult r;
            r.method = "eval";
            r.transmission = load_npy(test_path);
            const Image2D truth = load_npy(truth_path);
            rec.inputs = {truth_path, test_path};
            Mask2D mask;
            if (mask_path.empty()) {
                mask = ((truth - 1.0).abs() > 1e-9).cast<std::uint8_t>();
            } else {
                mask = load_mask_npy(mask_path);
                rec.inputs.push_back(mask_path);
            }
            Roi roi = roi_text.empty() ? mask_bounds(mask, cfg.injection.roi_margin) : parse_rect(roi_text);
            if (roi.area() == 0) roi = Roi{0, 0, truth.cols(), truth.rows()};
            check_roi(roi, truth.rows(), truth.cols());
            std::vector<FilamentSpec> specs;
            std::vector<double> lengths;
            if (!filaments_path.empty()) {
                read_filaments(filaments_path, specs, lengths);
                rec.inputs.push_back(filaments_path);
            }
            score_transmission(r, truth, mask, roi, specs, lengths);
            nlohmann::json j = to_json(r.report);
            j["roi"] = {roi.x0, roi.y0, roi.width, roi.height};
            j["sigma_recovered_outside"] = r.sigma_recovered_outside;
            j["amplitude_ratio"] = r.amplitude_ratio;
            write_json(t.file, j);
            std::vector<fs::path> outs = {t.file};
            if (!specs.empty()) {
                const fs::path csv = lengths_csv.empty() ? sibling(t.file, "_lengths.csv") : fs::path(lengths_csv);
                std::ofstream c(csv, std::ios::trunc);
                if (!c) fail(ErrorKind::Io, "cannot write " + csv.string());
                write_lengths_csv(c, r.report.filament_lengths, lengths);
                c.close();
                outs.push_back(csv);
            }
            std::cout << j.dump(2) << '\n';
            rec.outputs = outs;
            finish(t.dir, "eval");
        } else if (*entropy) {
            const Target t = target(g.out, cfg.output_dir, "entropy.npy");
            rec.args = {{"models", ensemble_dir}, {"shot", shot_path}, {"flat", flat_path}, {"mask", mask_path}};
            const nn::EnsembleModel ens = nn::load_ensemble(ensemble_dir);
            const Image2D shot = load_npy(shot_path), flat = load_npy(flat_path);
            const nn::EnsembleOutput o = nn::ensemble_transmission(ens, shot, flat);
            const Image2D h = nn::entropy_map(o.variance);
            const fs::path h_npy = entropy_path.empty() ? t.file : fs::path(entropy_path);
            const fs::path h_png = png_path.empty() ? sibling(h_npy, ".png") : fs::path(png_path);
            save_npy(h, h_npy);
            save_png(h, h_png);
            std::vector<fs::path> outs = {h_npy, h_png};
            for (const auto& p : save_image(o.mean, sibling(h_npy, "_T_mean.npy"))) outs.push_back(p);
            for (const auto& p : save_image(o.variance, sibling(h_npy, "_T_variance.npy"), true)) outs.push_back(p);
            rec.inputs = {shot_path, flat_path};
            for (const auto& p : files_under(ensemble_dir)) rec.inputs.push_back(p);
            if (!mask_path.empty()) {
                const nn::OodReport r = nn::ood_flag(h, load_mask_npy(mask_path));
                const nlohmann::json j = {{"mean_inside", r.mean_inside},
                                          {"mean_outside", r.mean_outside},
                                          {"ratio", r.ratio},
                                          {"flagged", r.flagged},
                                          {"members", ens.members.size()}};
                const fs::path report = report_path.empty() ? sibling(h_npy, "_ood.json") : fs::path(report_path);
                write_json(report, j);
                outs.push_back(report);
                rec.inputs.push_back(mask_path);
                std::cout << j.dump(2) << '\n';
            }
            rec.outputs = outs;
            finish(t.dir, "ensemble-entropy");
        } else if (*extract) {
            const Target t = target(g.out, cfg.output_dir, "");
            rec.args = {{"shot", shot_path}, {"cold_mean", cold_path}, {"region", region_text}, {"rects", rects_path},
                        {"shock", shock_split}};
            PatchBank bank;
            if (shot_path.empty()) {
                bank = build_scenario(cfg).filament_bank;
            } else {
                require_file(cold_path, "cold-mean");
                require_file(rects_path, "rects");
                const Image2D shot = load_npy(shot_path), cold = load_npy(cold_path);
                const Roi region = region_text.empty()
                                       ? Roi{0, 0, shot.cols(), registration_band_rows(shot.rows())}
                                       : parse_rect(region_text);
                const Image2D r = residual(shot, cold, phase_correlate(cold, shot, region));
                std::vector<Roi> rois;
                try {
                    for (const auto& v : read_json(rects_path)) {
                        const auto q = v.get<std::vector<Eigen::Index>>();
                        if (q.size() != 4) fail(ErrorKind::Format, "rects: each entry needs four numbers");
                        rois.push_back({q[0], q[1], q[2], q[3]});
                    }
                } catch (const nlohmann::json::exception& e) {
                    fail(ErrorKind::Format, std::string("rects: ") + e.what());
                }
                if (shock_split) {
                    if (rois.size() != 1) fail(ErrorKind::Config, "--shock takes exactly one rect");
                    check_roi(rois[0], r.rows(), r.cols());
                    bank = split_shock_patches(crop(r, rois[0]), shot_path);
                } else {
                    bank = crop_and_normalize(r, rois, shot_path);
                }
                rec.inputs = {shot_path, cold_path, rects_path};
            }
            save_patch_bank(bank, t.dir);
            finish(t.dir, "extract-patches");
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (io): " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
