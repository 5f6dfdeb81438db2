#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrtm/dataset.hpp"
#include "xrtm/dffn.hpp"
#include "xrtm/ensemble.hpp"
#include "xrtm/features.hpp"
#include "xrtm/fourier_filter.hpp"
#include "xrtm/metrics.hpp"

namespace xrtm {

struct UNetSettings {
    nn::UNetConfig unet;
    int epochs = 20;
    double learning_rate = 1e-4;
    double alpha = 10.0;
    double paste_probability = 0.9;
    double paste_gain = 0.2;
    double gain_jitter = 0.5;
    int pastes_per_image = 1;
    double normalize_percentile = 90.0;
    /// Load this model instead of training when non-empty.
    std::string model_path;
};

/// Synthetic laser-driven shots that feed the augmentation patch bank.
struct PatchSourceConfig {
    int n_shots = 2;
    double contrast = 0.3;
    Eigen::Index margin = 3;
};

struct InjectionConfig {
    double strong_contrast = 0.3;
    double weak_contrast = 0.12;
    int n_filaments = 6;
    Eigen::Index roi_margin = 8;
    double lineout_width = 3.0;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    std::vector<std::string> methods = {"raw", "fourier", "dffn", "unet"};
    /// lowfreq_radius <= 0 selects round(20 * min(h, w) / 1152), at least 1.
    FourierFilterConfig fourier{0};
    ParallelAnalysisConfig parallel_analysis;
    double tv_tolerance = 1e-6;
    int tv_max_iterations = 400;
    UNetSettings unet;
    PatchSourceConfig patches;
    InjectionConfig injection;
    int ensemble_members = 4;
    std::string ensemble_dir;
    ShockGeometry shock;
    int shock_base_channels = 48;
    std::string shock_model_path;
    /// Row for lineout export; negative picks the middle of the filament span.
    Eigen::Index lineout_row = -1;
    std::optional<double> pixel_pitch;
    std::string output_dir = "out";
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// Accepts either a bare config or a run.json (whose "config" member is used).
/// The top-level seed is propagated to the dataset unless it sets its own.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void validate(const PipelineConfig& cfg);

int resolved_fourier_radius(const PipelineConfig& cfg);
FourierFilterConfig resolved_fourier(const PipelineConfig& cfg);

/// One synthetic injection case: a cold shot, its flat, and the signal.
struct InjectionCase {
    std::string name;
    double contrast = 0.0;
    GroundTruthBundle bundle;  ///< bundle.shot is I_syn
    Roi roi;
};

struct Scenario {
    Dataset data;
    /// Mean of the training cold shots.
    Image2D cold_mean;
    PatchBank filament_bank;
    EffModel eff;
    ParallelAnalysisResult pa;
};

/// Dataset, patch bank (via phase correlation and log residuals), eigen flat
/// fields and parallel analysis.
Scenario build_scenario(const PipelineConfig& cfg);

/// Log residual of a synthetic signal shot against the registered cold mean.
Image2D signal_residual(const Scenario& sc, const Image2D& shot);

InjectionCase make_injection_case(const PipelineConfig& cfg, const Scenario& sc, const std::string& name,
                                  double contrast, std::uint64_t index);
InjectionCase make_shock_case(const PipelineConfig& cfg, const Scenario& sc, std::uint64_t index);

nn::TrainConfig train_config(const PipelineConfig& cfg, const std::vector<Image2D>& bank,
                             const nn::UNetConfig& unet, std::uint64_t seed);

/// Seeds of the filament model and of the parallel-analysis noise stacks.
std::uint64_t unet_seed(const PipelineConfig& cfg);
std::uint64_t parallel_analysis_seed(const PipelineConfig& cfg);

/// Trains the filament model or loads cfg.unet.model_path. The JSON-lines
/// training log goes to `log` when given.
nn::UNet<float> obtain_unet(const PipelineConfig& cfg, const Scenario& sc, std::ostream* log = nullptr);

struct MethodContext {
    const FourierFilterConfig* fourier = nullptr;
    const EffModel* eff = nullptr;
    double tv_tolerance = 1e-6;
    int tv_max_iterations = 400;
    const nn::UNet<float>* unet = nullptr;
    const nn::EnsembleModel* ensemble = nullptr;
};

struct MethodResult {
    std::string method;
    Image2D transmission;
    /// transmission divided by its mean over ROI pixels outside the signal mask.
    Image2D recovered;
    EvalReport report;
    double sigma_recovered_outside = 0.0;
    /// sum |recovered - 1| / sum |truth - 1| over the signal mask.
    double amplitude_ratio = 0.0;
    std::optional<Image2D> entropy;
    std::optional<nn::OodReport> ood;
    nlohmann::json extra;
};

struct CaseResult {
    InjectionCase icase;
    std::vector<MethodResult> methods;
    Eigen::Index lineout_row = 0;

    const MethodResult& method(const std::string& name) const;
};

Image2D apply_method(const std::string& method, const InjectionCase& c, const MethodContext& ctx,
                     nlohmann::json* extra = nullptr, std::optional<Image2D>* entropy = nullptr);
/// Fills recovered, report and amplitude_ratio of `r` from r.transmission.
/// Filaments that cannot be found count as length zero in the RMSPE, which is
/// only computed when truth lengths are given.
void score_transmission(MethodResult& r, const Image2D& truth, const Mask2D& mask, const Roi& roi,
                        const std::vector<FilamentSpec>& filaments, const std::vector<double>& truth_lengths,
                        const LengthConfig& lengths = {});
MethodResult evaluate_method(const std::string& method, const InjectionCase& c, const MethodContext& ctx,
                             const LengthConfig& lengths = {});
CaseResult evaluate_case(const InjectionCase& c, const std::vector<std::string>& methods, const MethodContext& ctx,
                         Eigen::Index lineout_row = -1);

nlohmann::json to_json(const CaseResult& r, const std::optional<double>& pixel_pitch = std::nullopt);
/// Writes <dir>/<method>_T.npy and .png plus lineouts.csv for one case.
void write_case_outputs(const CaseResult& r, const std::filesystem::path& dir);
/// CSV rows: case, method, mssim, psnr, mse, sigma_t_outside, rmspe.
void write_table_csv(const std::vector<CaseResult>& cases, const std::filesystem::path& path);

struct RunRecord {
    std::string command;
    nlohmann::json config;
    nlohmann::json args = nlohmann::json::object();
    std::vector<std::filesystem::path> inputs;
    /// Hashed outputs; every file under the output directory when unset.
    std::optional<std::vector<std::filesystem::path>> outputs;
    /// Listed without hashes because they contain wall times.
    std::vector<std::filesystem::path> logs;
};

/// Writes <dir>/run.json with the resolved config, arguments, seeds, version
/// and FNV-1a hashes of inputs and outputs.
void write_run_record(const std::filesystem::path& dir, const RunRecord& record);

struct CompareSummary {
    std::vector<CaseResult> cases;
    nlohmann::json report;
};

/// Methods on the strong-contrast injection case.
CompareSummary run_compare(const PipelineConfig& cfg);
/// Strong- and weak-contrast injection cases.
CompareSummary run_injection_test(const PipelineConfig& cfg);
/// Filament-trained vs shock-aware model on a shock phantom.
CompareSummary run_shock_generalization(const PipelineConfig& cfg);

}  // namespace xrtm
