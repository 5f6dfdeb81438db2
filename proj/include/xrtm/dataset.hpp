#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrtm/phantom.hpp"

namespace xrtm {

struct DatasetConfig {
    Eigen::Index height = 128;
    Eigen::Index width = 128;
    int n_train = 64;
    int n_val = 16;
    int n_test = 2;
    /// Flat-field stack for eigen flat fields.
    int n_flats = 20;
    double base_transmission = 0.42;
    Band band;
    double artifact_amplitude = 0.05;
    DriftRanges drift;
    NoiseConfig noise;
    int n_filaments = 6;
    FilamentGeometry filaments;
    std::uint64_t seed = 0;
};

/// Seed tags; every random draw is derive_seed(config seed, {tag, index, ...}).
namespace seed_tag {
inline constexpr std::uint64_t kArtifact = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kVal = 3;
inline constexpr std::uint64_t kFlat = 4;
inline constexpr std::uint64_t kTest = 5;
inline constexpr std::uint64_t kDrift = 10;
inline constexpr std::uint64_t kNoiseShot = 11;
inline constexpr std::uint64_t kNoiseFlat = 12;
inline constexpr std::uint64_t kSignal = 13;
}  // namespace seed_tag

struct Dataset {
    DatasetConfig config;
    ArtifactModel artifact;
    std::vector<GroundTruthBundle> train;  ///< cold shots
    std::vector<GroundTruthBundle> val;    ///< cold shots
    std::vector<GroundTruthBundle> flats;  ///< base transmission 1, no signal
    std::vector<GroundTruthBundle> test;   ///< filament-injected shot/flat pairs
};

void validate(const DatasetConfig& cfg);

/// Drift and noise seeds of sample `index` in split `tag`.
DriftParams sample_drift_for(const DatasetConfig& cfg, std::uint64_t tag, std::uint64_t index, int which = 0);

Dataset make_dataset(const DatasetConfig& cfg);

std::vector<Image2D> shots_of(const std::vector<GroundTruthBundle>& bundles);

/// Writes the NPY files and manifest.json; see the README for the layout.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Images of one split ("train", "val", "flats") listed in manifest.json.
std::vector<Image2D> load_split(const std::filesystem::path& dir, const std::string& split);
DatasetConfig load_dataset_config(const std::filesystem::path& dir);

nlohmann::json to_json(const DatasetConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise a Config error.
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DriftParams& d);
nlohmann::json to_json(const FilamentTruth& f);

/// Copies j[key] into dst when present; type mismatches raise a Config error.
template <class T>
void read_key(const nlohmann::json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("config key '") + key + "': " + e.what());
    }
}

/// Throws a Config error naming the first key of `j` not in `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace xrtm
