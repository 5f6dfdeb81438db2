#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xrtm/image.hpp"

namespace xrtm {

using ImageStack = std::vector<Image2D>;

/// Mean flat plus eigen flat fields (unit L2 norm, mutually orthogonal).
/// `eigenvalues` holds all m-1 component variances in descending order;
/// `effs` holds the components whose eigenvalue is numerically nonzero.
struct EffModel {
    Image2D mean_flat;
    std::vector<Image2D> effs;
    std::vector<double> eigenvalues;
    int K = 0;
};

struct ParallelAnalysisConfig {
    int samples = 100;
    double percentile = 95.0;
    std::uint64_t seed = 0;
};

struct ParallelAnalysisResult {
    int K = 0;
    /// Per-component percentile of the synthetic eigenvalues.
    std::vector<double> thresholds;
};

struct TvFitConfig {
    double tolerance = 1e-6;
    int max_iterations = 400;
    /// Pixels with mask == 1 are excluded from the total variation.
    std::optional<Mask2D> mask;
    double fd_step = 1e-5;
    double division_floor = kDefaultDivisionFloor;
};

struct TvFitResult {
    Eigen::VectorXd weights;
    /// Objective after each accepted iterate; entry 0 is the w = 0 value.
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
};

/// Principal components of the mean-subtracted stack via the m x m Gram
/// matrix (snapshot method). Eigenvalues are population variances.
EffModel compute_effs(const ImageStack& flats);

/// Eigenvalues of G = X^T X / m for the mean-subtracted stack X, descending,
/// m - 1 of them. Shared by compute_effs and the synthetic stacks.
std::vector<double> stack_eigenvalues(const Eigen::MatrixXd& centred_columns);

ParallelAnalysisResult parallel_analysis_detailed(const ImageStack& flats, const std::vector<double>& eigenvalues,
                                                  const ParallelAnalysisConfig& cfg = {});
int parallel_analysis(const ImageStack& flats, const std::vector<double>& eigenvalues,
                      const ParallelAnalysisConfig& cfg = {});

/// Anisotropic TV over forward-difference pairs whose pixels are both unmasked.
double tv(const Image2D& img, const Mask2D* mask = nullptr);

Image2D estimate_flat(const EffModel& model, const Eigen::VectorXd& weights);

/// tv(shot / flat(w)) * mean(flat(w)).
double tv_objective(const Image2D& shot, const EffModel& model, const Eigen::VectorXd& weights,
                    const TvFitConfig& cfg);

/// BFGS with Armijo backtracking and central-difference gradients, from w = 0.
TvFitResult fit_weights(const Image2D& shot, const EffModel& model, const TvFitConfig& cfg = {});

Image2D dffn_reconstruct(const Image2D& shot, const EffModel& model, const Eigen::VectorXd& weights,
                         double floor = kDefaultDivisionFloor);
Image2D dffn_reconstruct(const Image2D& shot, const EffModel& model, const TvFitConfig& cfg = {},
                         TvFitResult* fit = nullptr);

}  // namespace xrtm
