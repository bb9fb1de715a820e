#pragma once

#include "trackdiff/ssm.hpp"

#include <functional>

namespace trackdiff {

struct GaussianBelief {
    Vec mean;
    Mat cov;
};

/// Weighted particle cloud; column i of `particles` is one state.
struct ParticleSet {
    Mat particles;
    Vec log_weights;

    Eigen::Index size() const { return particles.cols(); }
};

struct FilterConfig {
    double ukf_alpha = 0.1;
    double ukf_beta = 2.0;
    double ukf_kappa = 0.0;
    int pf_particles = 1000;
    double pf_ess_fraction = 0.5;
    double jacobian_step = 1e-6;
    /// Filters start at the true x_0 with this isotropic covariance.
    double init_cov = 1e-4;

    void validate() const;
};

using VectorMap = std::function<Vec(const Vec&)>;

/// Central-difference Jacobian; column i is (fn(x + h e_i) - fn(x - h e_i)) / 2h.
Mat numerical_jacobian(const VectorMap& fn, const Vec& x, double step);

/// Textbook Kalman filter predict + update for a linear Gaussian model.
GaussianBelief kf_oracle_step(const GaussianBelief& belief, const Vec& z, const Mat& F, const Mat& H, const Mat& Q,
                              const Mat& R);

GaussianBelief ekf_step(const GaussianBelief& belief, const Vec& z, const SsmSpec& model,
                        const FilterConfig& cfg = {});

GaussianBelief ukf_step(const GaussianBelief& belief, const Vec& z, const SsmSpec& model,
                        const FilterConfig& cfg = {});

/// Scaled unscented-transform weights for dimension n.
struct SigmaWeights {
    Vec mean;
    Vec cov;
    double lambda = 0.0;
};
SigmaWeights sigma_weights(Eigen::Index n, const FilterConfig& cfg);

ParticleSet init_particles(const Vec& x0, double init_cov, int count, Rng& rng);
double effective_sample_size(const ParticleSet& ps);
void normalize_log_weights(ParticleSet& ps);
/// Systematic resampling; the returned set has the same size and uniform weights.
ParticleSet systematic_resample(const ParticleSet& ps, Rng& rng);
Vec particle_mean(const ParticleSet& ps);

ParticleSet pf_step(const ParticleSet& ps, const Vec& z, const SsmSpec& model, const FilterConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Whole-trajectory runners
// ---------------------------------------------------------------------------

enum class ClassicalFilter { ekf, ukf, pf };

std::string to_string(ClassicalFilter f);

/// Runs a filter over a measurement sequence from the known initial state and
/// returns the posterior mean after each measurement.
std::vector<Vec> run_filter(ClassicalFilter kind, const std::vector<Vec>& measurements, const Vec& x0,
                            const SsmSpec& model, const FilterConfig& cfg, Rng& rng);

} // namespace trackdiff
