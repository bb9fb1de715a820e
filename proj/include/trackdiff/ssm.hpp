#pragma once

#include "trackdiff/common.hpp"

#include <array>
#include <optional>

namespace trackdiff {

// ---------------------------------------------------------------------------
// Noise laws
// ---------------------------------------------------------------------------

enum class NoiseKind { gaussian, gaussian_mixture };

/// Zero-mean additive noise: either N(0, cov1) or the two-component mixture
/// w ~ mix_weight * N(0, cov1) + (1 - mix_weight) * N(0, cov2).
///
/// Covariances are validated (symmetric, PSD) on construction and their square
/// roots are cached, so sampling is cheap and a spec that exists is valid.
class NoiseSpec {
public:
    NoiseSpec() = default;
    NoiseSpec(NoiseKind kind, Mat cov1, Mat cov2, double mix_weight);

    static NoiseSpec gaussian(const Mat& cov);
    static NoiseSpec mixture(const Mat& cov1, const Mat& cov2, double mix_weight);
    static NoiseSpec zero(Eigen::Index dim);

    NoiseKind kind() const { return kind_; }
    const Mat& cov1() const { return cov1_; }
    const Mat& cov2() const { return cov2_; }
    double mix_weight() const { return kind_ == NoiseKind::gaussian ? 1.0 : mix_weight_; }
    Eigen::Index dim() const { return cov1_.rows(); }

    /// Covariance of the law: cov1, or mix_weight*cov1 + (1-mix_weight)*cov2.
    Mat moment_matched_cov() const;

    Vec sample(Rng& rng) const;

    /// Log density at e. Requires positive definite component covariances.
    double log_density(const Vec& e) const;

private:
    struct Component {
        Mat sqrt;        // any factor with sqrt * sqrt^T = cov
        Mat inverse;     // empty when cov is singular
        double log_norm = 0.0;
    };
    static Component factor(const Mat& cov);

    NoiseKind kind_ = NoiseKind::gaussian;
    Mat cov1_, cov2_;
    double mix_weight_ = 1.0;
    Component c1_, c2_;
};

// ---------------------------------------------------------------------------
// Transition and measurement maps
// ---------------------------------------------------------------------------

enum class TransitionKind { lorenz_taylor, wiener_velocity, explicit_matrix };

struct TransitionSpec {
    TransitionKind kind = TransitionKind::lorenz_taylor;
    double delta = 0.02;
    /// Number of Taylor terms J; nullopt means the converged ("exact") series.
    std::optional<int> taylor_order;
    /// Used only by explicit_matrix.
    Mat matrix;

    void validate(Eigen::Index n_x) const;
};

enum class MeasurementKind { identity, rotated_identity, cartesian_to_spherical, explicit_matrix };

struct MeasurementSpec {
    MeasurementKind kind = MeasurementKind::identity;
    /// Rotation angles in degrees about the first, second and third axes,
    /// applied in that order. The scalar rotation knob is the third entry.
    std::array<double, 3> euler_deg{0.0, 0.0, 0.0};
    /// Used only by explicit_matrix.
    Mat matrix;

    double rotation_deg() const { return euler_deg[2]; }
    void validate(Eigen::Index n_x, Eigen::Index n_z) const;
};

struct SsmSpec {
    TransitionSpec transition;
    MeasurementSpec measurement;
    NoiseSpec process_noise;
    NoiseSpec meas_noise;
    Eigen::Index n_x = 3;
    Eigen::Index n_z = 3;

    void validate() const;
};

struct Trajectory {
    std::vector<Vec> states;       // T + 1 entries, states[0] = x_0
    std::vector<Vec> measurements; // T entries, measurements[t-1] observes states[t]

    std::size_t horizon() const { return measurements.size(); }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Lorenz system matrix A(x) with the first state component on the coupling entries.
Mat lorenz_system_matrix(const Vec& x);

/// I + sum_{j=1..J} (A(x) delta)^j / j!, or the converged series when order is nullopt.
Mat lorenz_transition_matrix(const Vec& x, double delta, std::optional<int> order);

struct WienerVelocityModel {
    Mat motion; // 4x4
    Mat process_cov; // 4x4
};

/// Constant-velocity model in two dimensions with white acceleration of intensity q.
WienerVelocityModel wiener_velocity_model(double delta_t, double q);

/// F(x) for the given transition (constant for the linear kinds).
Mat transition_matrix(const TransitionSpec& spec, const Vec& x);

/// Noise-free state map f(x) = F(x) x.
Vec propagate(const TransitionSpec& spec, const Vec& x);

/// Rotation matrix for the Euler triple in degrees.
Mat rotation_matrix(const std::array<double, 3>& euler_deg);

/// Noise-free measurement h(x).
Vec measure(const MeasurementSpec& spec, const Vec& x);

/// z - zhat with angular channels wrapped to (-pi, pi].
Vec measurement_residual(const MeasurementSpec& spec, const Vec& z, const Vec& zhat);

/// Inverse of cartesian_to_spherical: (r, azimuth, inclination) -> (x, y, z).
Vec spherical_to_cartesian(const Vec& s);

Vec sample_noise(const NoiseSpec& spec, Rng& rng);

Trajectory simulate_trajectory(const SsmSpec& ssm, const Vec& x0, std::size_t horizon, Rng& rng);

/// Uniform draw in [-1, 1]^3 followed by a noise-free burn-in on the exact map.
Vec lorenz_initial_state(Rng& rng, double delta = 0.02, int burn_in = 500);

// ---------------------------------------------------------------------------
// Scenario helpers
// ---------------------------------------------------------------------------

/// Variances implied by an inverse measurement noise level 1/r^2 [dB] and
/// the ratio nu = q^2 / r^2 [dB].
struct NoiseLevels {
    double q2 = 0.0;
    double r2 = 0.0;
};
NoiseLevels noise_levels(double inv_r2_db, double nu_db);

struct LorenzScenario {
    MeasurementSpec measurement;
    NoiseKind noise = NoiseKind::gaussian;
    double mix_weight = 0.8;
    double mix_scale = 10.0; // cov2 = mix_scale * cov1
    double delta = 0.02;
    std::optional<int> taylor_order;
};

SsmSpec make_lorenz_ssm(const LorenzScenario& scenario, const NoiseLevels& levels);

std::string to_string(NoiseKind kind);
std::string to_string(TransitionKind kind);
std::string to_string(MeasurementKind kind);
NoiseKind noise_kind_from_string(const std::string& s);
TransitionKind transition_kind_from_string(const std::string& s);
MeasurementKind measurement_kind_from_string(const std::string& s);

} // namespace trackdiff
