#include "xrtm/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "xrtm/npy.hpp"

namespace xrtm {

namespace {

std::string numbered(const char* stem, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu.npy", stem, i);
    return buf;
}

PolarityMode polarity_from_string(const std::string& s) {
    if (s == "mixed") return PolarityMode::Mixed;
    if (s == "dark") return PolarityMode::Dark;
    if (s == "bright") return PolarityMode::Bright;
    fail(ErrorKind::Config, "unknown polarity '" + s + "'");
}

const char* to_string(PolarityMode p) {
    switch (p) {
        case PolarityMode::Dark: return "dark";
        case PolarityMode::Bright: return "bright";
        case PolarityMode::Mixed: break;
    }
    return "mixed";
}

GroundTruthBundle cold_sample(const Dataset& ds, std::uint64_t tag, std::uint64_t i, double base_transmission) {
    const DatasetConfig& c = ds.config;
    return gen_cold_shot(ds.artifact, sample_drift_for(c, tag, i), base_transmission,
                         derive_seed(c.seed, {tag, i, seed_tag::kNoiseShot}), c.noise);
}

}  // namespace

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) fail(ErrorKind::Config, std::string(where) + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(ErrorKind::Config, std::string(where) + ": unknown key '" + key + "'");
    }
}

void validate(const DatasetConfig& c) {
    if (c.height < 16 || c.width < 16) fail(ErrorKind::Config, "dataset: images must be at least 16x16");
    if (c.n_train < 0 || c.n_val < 0 || c.n_test < 0 || c.n_flats < 0) fail(ErrorKind::Config, "dataset: negative count");
    if (!(c.base_transmission > 0.0 && c.base_transmission <= 1.0)) {
        fail(ErrorKind::Config, "dataset: base_transmission must lie in (0, 1]");
    }
    if (!(c.artifact_amplitude >= 0.0)) fail(ErrorKind::Config, "dataset: artifact_amplitude must be non-negative");
    if (c.n_flats == 1) fail(ErrorKind::Config, "dataset: n_flats must be 0 or at least 2");
    if (c.n_test > 0 && c.n_filaments < 1) fail(ErrorKind::Config, "dataset: n_filaments must be at least 1");
}

DriftParams sample_drift_for(const DatasetConfig& cfg, std::uint64_t tag, std::uint64_t index, int which) {
    Rng rng(derive_seed(cfg.seed, {tag, index, seed_tag::kDrift, static_cast<std::uint64_t>(which)}));
    return sample_drift(rng, cfg.drift);
}

Dataset make_dataset(const DatasetConfig& cfg) {
    validate(cfg);
    Dataset ds;
    ds.config = cfg;
    ds.artifact = make_artifact_model(derive_seed(cfg.seed, {seed_tag::kArtifact}), cfg.height, cfg.width, cfg.band,
                                      cfg.artifact_amplitude);
    for (int i = 0; i < cfg.n_train; ++i) ds.train.push_back(cold_sample(ds, seed_tag::kTrain, i, cfg.base_transmission));
    for (int i = 0; i < cfg.n_val; ++i) ds.val.push_back(cold_sample(ds, seed_tag::kVal, i, cfg.base_transmission));
    for (int i = 0; i < cfg.n_flats; ++i) ds.flats.push_back(cold_sample(ds, seed_tag::kFlat, i, 1.0));
    for (int i = 0; i < cfg.n_test; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        const SignalPhantom signal = gen_filament_map(derive_seed(cfg.seed, {seed_tag::kTest, idx, seed_tag::kSignal}),
                                                      cfg.height, cfg.width, cfg.n_filaments, cfg.filaments);
        ds.test.push_back(gen_bundle(ds.artifact, sample_drift_for(cfg, seed_tag::kTest, idx, 0),
                                     sample_drift_for(cfg, seed_tag::kTest, idx, 1), cfg.base_transmission, signal,
                                     derive_seed(cfg.seed, {seed_tag::kTest, idx, seed_tag::kNoiseShot}),
                                     derive_seed(cfg.seed, {seed_tag::kTest, idx, seed_tag::kNoiseFlat}), cfg.noise));
    }
    return ds;
}

std::vector<Image2D> shots_of(const std::vector<GroundTruthBundle>& bundles) {
    std::vector<Image2D> out;
    out.reserve(bundles.size());
    for (const auto& b : bundles) out.push_back(b.shot);
    return out;
}

nlohmann::json to_json(const DriftParams& d) {
    return {{"dx", d.dx}, {"dy", d.dy}, {"magnification", d.magnification}, {"intensity_scale", d.intensity_scale}};
}

nlohmann::json to_json(const FilamentTruth& f) {
    return {{"id", f.id},
            {"base", {f.base_x, f.base_y}},
            {"tip", {f.tip_x, f.tip_y}},
            {"axis", {f.axis_x, f.axis_y}},
            {"length", f.length},
            {"width_sigma", f.width_sigma},
            {"contrast", f.contrast},
            {"polarity", f.polarity}};
}

nlohmann::json to_json(const DatasetConfig& c) {
    const FilamentGeometry& g = c.filaments;
    return {
        {"height", c.height},
        {"width", c.width},
        {"n_train", c.n_train},
        {"n_val", c.n_val},
        {"n_test", c.n_test},
        {"n_flats", c.n_flats},
        {"base_transmission", c.base_transmission},
        {"band", {c.band.low, c.band.high}},
        {"artifact_amplitude", c.artifact_amplitude},
        {"drift",
         {{"max_shift", c.drift.max_shift},
          {"max_magnification_deviation", c.drift.max_magnification_deviation},
          {"max_intensity_deviation", c.drift.max_intensity_deviation}}},
        {"noise", {{"level", c.noise.level}, {"photons_per_unit", c.noise.photons_per_unit}}},
        {"n_filaments", c.n_filaments},
        {"filaments",
         {{"contrast", g.contrast},
          {"width_sigma", g.width_sigma},
          {"min_length", g.min_length},
          {"max_length", g.max_length},
          {"taper", g.taper},
          {"max_angle_deg", g.max_angle_deg},
          {"polarity", to_string(g.polarity)},
          {"base_margin", g.base_margin},
          {"min_spacing", g.min_spacing},
          {"span_begin", g.span_begin},
          {"span_end", g.span_end}}},
        {"seed", c.seed},
    };
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"height", "width", "n_train", "n_val", "n_test", "n_flats", "base_transmission", "band",
                   "artifact_amplitude", "drift", "noise", "n_filaments", "filaments", "seed"},
               "dataset");
    DatasetConfig c;
    read_key(j, "height", c.height);
    read_key(j, "width", c.width);
    read_key(j, "n_train", c.n_train);
    read_key(j, "n_val", c.n_val);
    read_key(j, "n_test", c.n_test);
    read_key(j, "n_flats", c.n_flats);
    read_key(j, "base_transmission", c.base_transmission);
    if (j.contains("band")) {
        std::vector<double> band;
        read_key(j, "band", band);
        if (band.size() != 2) fail(ErrorKind::Config, "dataset.band must be [low, high]");
        c.band = {band[0], band[1]};
    }
    read_key(j, "artifact_amplitude", c.artifact_amplitude);
    if (j.contains("drift")) {
        const auto& d = j.at("drift");
        check_keys(d, {"max_shift", "max_magnification_deviation", "max_intensity_deviation"}, "dataset.drift");
        read_key(d, "max_shift", c.drift.max_shift);
        read_key(d, "max_magnification_deviation", c.drift.max_magnification_deviation);
        read_key(d, "max_intensity_deviation", c.drift.max_intensity_deviation);
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        check_keys(n, {"level", "photons_per_unit"}, "dataset.noise");
        read_key(n, "level", c.noise.level);
        read_key(n, "photons_per_unit", c.noise.photons_per_unit);
    }
    read_key(j, "n_filaments", c.n_filaments);
    if (j.contains("filaments")) {
        const auto& f = j.at("filaments");
        check_keys(f, {"contrast", "width_sigma", "min_length", "max_length", "taper", "max_angle_deg", "polarity",
                       "base_margin", "min_spacing", "span_begin", "span_end"},
                   "dataset.filaments");
        FilamentGeometry& g = c.filaments;
        read_key(f, "contrast", g.contrast);
        read_key(f, "width_sigma", g.width_sigma);
        read_key(f, "min_length", g.min_length);
        read_key(f, "max_length", g.max_length);
        read_key(f, "taper", g.taper);
        read_key(f, "max_angle_deg", g.max_angle_deg);
        if (f.contains("polarity")) {
            std::string p;
            read_key(f, "polarity", p);
            g.polarity = polarity_from_string(p);
        }
        read_key(f, "base_margin", g.base_margin);
        read_key(f, "min_spacing", g.min_spacing);
        read_key(f, "span_begin", g.span_begin);
        read_key(f, "span_end", g.span_end);
    }
    read_key(j, "seed", c.seed);
    return c;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* sub : {"train", "val", "flats", "test"}) fs::create_directories(dir / sub);
    save_npy(ds.artifact.master_pattern, dir / "master_pattern.npy");

    nlohmann::json manifest = {{"format", "xrtm-dataset"}, {"version", 1}, {"config", to_json(ds.config)}};
    manifest["master_pattern"] = "master_pattern.npy";

    auto write_cold = [&](const std::vector<GroundTruthBundle>& bundles, const char* split, const char* stem) {
        nlohmann::json entries = nlohmann::json::array();
        for (std::size_t i = 0; i < bundles.size(); ++i) {
            const GroundTruthBundle& b = bundles[i];
            const std::string file = std::string(split) + "/" + numbered(stem, i);
            const std::string artifact = std::string(split) + "/" + numbered("artifact", i);
            save_npy(b.shot, dir / file);
            save_npy(b.artifact_shot, dir / artifact);
            entries.push_back({{"file", file},
                               {"artifact", artifact},
                               {"drift", to_json(b.drift_shot)},
                               {"noise_seed", b.noise_seed_shot},
                               {"base_transmission", b.base_transmission}});
        }
        manifest[split] = entries;
    };
    write_cold(ds.train, "train", "cold");
    write_cold(ds.val, "val", "cold");
    write_cold(ds.flats, "flats", "flat");

    nlohmann::json tests = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        const GroundTruthBundle& b = ds.test[i];
        nlohmann::json e = {{"shot", "test/" + numbered("shot", i)},
                            {"flat", "test/" + numbered("flat", i)},
                            {"signal", "test/" + numbered("signal", i)},
                            {"mask", "test/" + numbered("mask", i)},
                            {"artifact_shot", "test/" + numbered("artifact_shot", i)},
                            {"artifact_flat", "test/" + numbered("artifact_flat", i)},
                            {"drift_shot", to_json(b.drift_shot)},
                            {"drift_flat", to_json(b.drift_flat)},
                            {"noise_seed_shot", b.noise_seed_shot},
                            {"noise_seed_flat", b.noise_seed_flat},
                            {"base_transmission", b.base_transmission},
                            {"filaments", nlohmann::json::array()}};
        for (const auto& f : b.filaments) e["filaments"].push_back(to_json(f));
        save_npy(b.shot, dir / e["shot"].get<std::string>());
        save_npy(b.flat, dir / e["flat"].get<std::string>());
        save_npy(b.signal_map, dir / e["signal"].get<std::string>());
        save_mask_npy(b.signal_mask, dir / e["mask"].get<std::string>());
        save_npy(b.artifact_shot, dir / e["artifact_shot"].get<std::string>());
        save_npy(b.artifact_flat, dir / e["artifact_flat"].get<std::string>());
        tests.push_back(e);
    }
    manifest["test"] = tests;

    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
    if (!out) fail(ErrorKind::Io, "failed writing manifest.json");
}

namespace {

nlohmann::json read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) fail(ErrorKind::Io, "manifest.json not found in " + dir.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("manifest.json: ") + e.what());
    }
}

}  // namespace

std::vector<Image2D> load_split(const std::filesystem::path& dir, const std::string& split) {
    const auto manifest = read_manifest(dir);
    if (!manifest.contains(split)) fail(ErrorKind::Data, "manifest has no split '" + split + "'");
    std::vector<Image2D> out;
    for (const auto& e : manifest.at(split)) {
        const std::string key = e.contains("file") ? "file" : "shot";
        out.push_back(load_npy(dir / e.at(key).get<std::string>()));
    }
    return out;
}

DatasetConfig load_dataset_config(const std::filesystem::path& dir) {
    return dataset_config_from_json(read_manifest(dir).at("config"));
}

}  // namespace xrtm
