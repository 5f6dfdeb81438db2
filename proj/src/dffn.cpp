#include "xrtm/dffn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xrtm/random.hpp"

namespace xrtm {

namespace {

Eigen::MatrixXd stack_columns(const ImageStack& flats) {
    const Eigen::Index n = flats.front().size();
    Eigen::MatrixXd cols(n, static_cast<Eigen::Index>(flats.size()));
    for (std::size_t m = 0; m < flats.size(); ++m) {
        cols.col(static_cast<Eigen::Index>(m)) = Eigen::Map<const Eigen::VectorXd>(flats[m].data(), n);
    }
    return cols;
}

void check_stack(const ImageStack& flats) {
    if (flats.size() < 2) fail(ErrorKind::Data, "at least two flats are required");
    for (const auto& f : flats) {
        if (f.rows() != flats.front().rows() || f.cols() != flats.front().cols()) {
            fail(ErrorKind::Shape, "flat stack has inconsistent shapes");
        }
    }
}

}  // namespace

std::vector<double> stack_eigenvalues(const Eigen::MatrixXd& centred) {
    const auto m = centred.cols();
    const Eigen::MatrixXd gram = (centred.transpose() * centred) / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    std::vector<double> values;
    for (Eigen::Index k = m - 1; k >= 1; --k) values.push_back(std::max(0.0, solver.eigenvalues()(k)));
    return values;
}

EffModel compute_effs(const ImageStack& flats) {
    check_stack(flats);
    const Eigen::Index h = flats.front().rows();
    const Eigen::Index w = flats.front().cols();
    const auto m = static_cast<Eigen::Index>(flats.size());

    Eigen::MatrixXd x = stack_columns(flats);
    const Eigen::VectorXd mean = x.rowwise().mean();
    x.colwise() -= mean;

    const Eigen::MatrixXd gram = (x.transpose() * x) / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);

    EffModel model;
    model.mean_flat = Eigen::Map<const Image2D>(mean.data(), h, w);
    const double top = std::max(0.0, solver.eigenvalues()(m - 1));
    std::vector<Eigen::VectorXd> basis;
    for (Eigen::Index k = m - 1; k >= 1; --k) {
        const double lambda = std::max(0.0, solver.eigenvalues()(k));
        model.eigenvalues.push_back(lambda);
        if (lambda <= 1e-12 * top || lambda == 0.0 || static_cast<Eigen::Index>(basis.size()) != m - 1 - k) continue;
        Eigen::VectorXd u = x * solver.eigenvectors().col(k);
        // Modified Gram-Schmidt against the components already accepted.
        for (const auto& b : basis) u -= b.dot(u) * b;
        const double norm = u.norm();
        if (norm == 0.0) continue;
        basis.push_back(u / norm);
    }
    for (const auto& u : basis) model.effs.push_back(Eigen::Map<const Image2D>(u.data(), h, w));
    return model;
}

ParallelAnalysisResult parallel_analysis_detailed(const ImageStack& flats, const std::vector<double>& eigenvalues,
                                                  const ParallelAnalysisConfig& cfg) {
    check_stack(flats);
    if (cfg.samples < 1) fail(ErrorKind::Parameter, "parallel analysis needs at least one sample");
    Eigen::MatrixXd x = stack_columns(flats);
    const Eigen::Index n = x.rows();
    const Eigen::Index m = x.cols();
    const Eigen::VectorXd mean = x.rowwise().mean();
    x.colwise() -= mean;
    // Unbiased per-pixel spread: the synthetic stacks are centred again below.
    const Eigen::VectorXd stddev = (x.array().square().rowwise().sum() / static_cast<double>(m - 1)).sqrt();

    const std::size_t n_components = static_cast<std::size_t>(m - 1);
    std::vector<std::vector<double>> synthetic(n_components);
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(n, m);
    for (int s = 0; s < cfg.samples; ++s) {
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index p = 0; p < n; ++p) z(p, j) = stddev(p) * normal(rng);
        const Eigen::VectorXd zmean = z.rowwise().mean();
        z.colwise() -= zmean;
        const std::vector<double> values = stack_eigenvalues(z);
        for (std::size_t k = 0; k < n_components; ++k) synthetic[k].push_back(values[k]);
    }

    ParallelAnalysisResult result;
    for (std::size_t k = 0; k < n_components; ++k) result.thresholds.push_back(percentile(synthetic[k], cfg.percentile));
    const std::size_t usable = std::min(eigenvalues.size(), n_components);
    while (static_cast<std::size_t>(result.K) < usable &&
           eigenvalues[static_cast<std::size_t>(result.K)] > result.thresholds[static_cast<std::size_t>(result.K)]) {
        ++result.K;
    }
    return result;
}

int parallel_analysis(const ImageStack& flats, const std::vector<double>& eigenvalues,
                      const ParallelAnalysisConfig& cfg) {
    return parallel_analysis_detailed(flats, eigenvalues, cfg).K;
}

double tv(const Image2D& img, const Mask2D* mask) {
    if (mask != nullptr && (mask->rows() != img.rows() || mask->cols() != img.cols())) {
        fail(ErrorKind::Shape, "tv: mask shape mismatch");
    }
    const Eigen::Index h = img.rows();
    const Eigen::Index w = img.cols();
    if (mask == nullptr) {
        return (img.rightCols(w - 1) - img.leftCols(w - 1)).abs().sum() +
               (img.bottomRows(h - 1) - img.topRows(h - 1)).abs().sum();
    }
    const Mask2D& m = *mask;
    double total = 0.0;
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (m(y, x) != 0) continue;
            if (x + 1 < w && m(y, x + 1) == 0) total += std::abs(img(y, x + 1) - img(y, x));
            if (y + 1 < h && m(y + 1, x) == 0) total += std::abs(img(y + 1, x) - img(y, x));
        }
    }
    return total;
}

Image2D estimate_flat(const EffModel& model, const Eigen::VectorXd& weights) {
    if (weights.size() > static_cast<Eigen::Index>(model.effs.size())) {
        fail(ErrorKind::Parameter, "more weights than eigen flat fields");
    }
    Image2D flat = model.mean_flat;
    for (Eigen::Index k = 0; k < weights.size(); ++k) flat += weights(k) * model.effs[static_cast<std::size_t>(k)];
    return flat;
}

double tv_objective(const Image2D& shot, const EffModel& model, const Eigen::VectorXd& weights,
                    const TvFitConfig& cfg) {
    const Image2D flat = estimate_flat(model, weights);
    const Image2D t = shot / flat.max(cfg.division_floor);
    return tv(t, cfg.mask ? &*cfg.mask : nullptr) * flat.mean();
}

TvFitResult fit_weights(const Image2D& shot, const EffModel& model, const TvFitConfig& cfg) {
    check_same_shape(shot, model.mean_flat, "fit_weights");
    if (!(cfg.tolerance > 0.0) || cfg.max_iterations < 1) fail(ErrorKind::Parameter, "invalid TvFitConfig");
    if (model.K > static_cast<int>(model.effs.size())) fail(ErrorKind::Parameter, "K exceeds available EFFs");

    const Eigen::Index k_dim = model.K;
    TvFitResult result;
    result.weights = Eigen::VectorXd::Zero(k_dim);

    auto objective = [&](const Eigen::VectorXd& w) {
        const double f = tv_objective(shot, model, w, cfg);
        if (!std::isfinite(f)) {
            std::ostringstream os;
            os << "DFFN objective is not finite at w = [" << w.transpose() << "]";
            fail(ErrorKind::Numerical, os.str());
        }
        return f;
    };
    auto gradient = [&](const Eigen::VectorXd& w) {
        Eigen::VectorXd g(k_dim);
        for (Eigen::Index k = 0; k < k_dim; ++k) {
            Eigen::VectorXd wp = w, wm = w;
            wp(k) += cfg.fd_step;
            wm(k) -= cfg.fd_step;
            g(k) = (objective(wp) - objective(wm)) / (2.0 * cfg.fd_step);
        }
        return g;
    };

    double f = objective(result.weights);
    result.objective_trace.push_back(f);
    if (k_dim == 0) {
        result.converged = true;
        result.stop_reason = "no components";
        return result;
    }

    Eigen::VectorXd w = result.weights;
    Eigen::VectorXd g = gradient(w);
    Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(k_dim, k_dim) / std::max(g.norm(), 1e-12);
    constexpr double armijo = 1e-4;

    result.stop_reason = "max iterations";
    for (int it = 0; it < cfg.max_iterations; ++it) {
        if (g.norm() < cfg.tolerance) {
            result.converged = true;
            result.stop_reason = "gradient tolerance";
            break;
        }
        Eigen::VectorXd direction = -inv_hessian * g;
        double slope = g.dot(direction);
        if (!(slope < 0.0)) {
            inv_hessian = Eigen::MatrixXd::Identity(k_dim, k_dim) / std::max(g.norm(), 1e-12);
            direction = -inv_hessian * g;
            slope = g.dot(direction);
        }

        double step = 1.0;
        double f_new = f;
        Eigen::VectorXd w_new = w;
        bool accepted = false;
        for (int halving = 0; halving < 50; ++halving) {
            w_new = w + step * direction;
            f_new = objective(w_new);
            if (f_new <= f + armijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            result.converged = true;
            result.stop_reason = "no sufficient decrease along search direction";
            break;
        }

        const Eigen::VectorXd s = w_new - w;
        const Eigen::VectorXd g_new = gradient(w_new);
        const Eigen::VectorXd y = g_new - g;
        w = w_new;
        f = f_new;
        g = g_new;
        result.objective_trace.push_back(f);
        result.iterations = it + 1;

        const double ys = y.dot(s);
        if (ys > 1e-12 * s.norm() * y.norm()) {
            if (it == 0) inv_hessian = Eigen::MatrixXd::Identity(k_dim, k_dim) * (ys / y.squaredNorm());
            const double rho = 1.0 / ys;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k_dim, k_dim);
            inv_hessian = (eye - rho * s * y.transpose()) * inv_hessian * (eye - rho * y * s.transpose()) +
                          rho * s * s.transpose();
        }
        if (s.norm() < cfg.tolerance * (1.0 + w.norm())) {
            result.converged = true;
            result.stop_reason = "step tolerance";
            break;
        }
    }
    result.weights = w;
    return result;
}

Image2D dffn_reconstruct(const Image2D& shot, const EffModel& model, const Eigen::VectorXd& weights,
                         double floor) {
    return reconstruct_transmission(shot, estimate_flat(model, weights), floor);
}

Image2D dffn_reconstruct(const Image2D& shot, const EffModel& model, const TvFitConfig& cfg, TvFitResult* fit) {
    TvFitResult r = fit_weights(shot, model, cfg);
    Image2D t = dffn_reconstruct(shot, model, r.weights, cfg.division_floor);
    if (fit != nullptr) *fit = std::move(r);
    return t;
}

}  // namespace xrtm
