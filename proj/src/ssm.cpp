#include "trackdiff/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace trackdiff {

namespace {

constexpr double kExactTermTolerance = 1e-14;
constexpr int kExactMaxTerms = 40;
constexpr double kDivergenceBound = 1e6;

void check_square(const Mat& m, const char* what)
{
    if (m.rows() != m.cols()) throw Error(std::string(what) + ": matrix is not square");
}

} // namespace

// ---------------------------------------------------------------------------
// NoiseSpec
// ---------------------------------------------------------------------------

NoiseSpec::Component NoiseSpec::factor(const Mat& cov)
{
    check_square(cov, "noise covariance");
    if (!cov.allFinite()) throw Error("noise covariance: non-finite entries");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw Error("noise covariance: not symmetric");

    Component c;
    const Eigen::Index n = cov.rows();
    if (n == 0) return c;
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (cov + cov.transpose()));
    const Vec& lambda = eig.eigenvalues();
    if (lambda.minCoeff() < -1e-10 * scale) throw Error("noise covariance: not positive semi-definite");

    const Vec clipped = lambda.cwiseMax(0.0);
    c.sqrt = eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal();

    if (lambda.minCoeff() > 1e-300) {
        c.inverse = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
        c.log_norm = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + lambda.array().log().sum());
    }
    return c;
}

NoiseSpec::NoiseSpec(NoiseKind kind, Mat cov1, Mat cov2, double mix_weight)
    : kind_(kind), cov1_(std::move(cov1)), cov2_(std::move(cov2)), mix_weight_(mix_weight)
{
    if (!(mix_weight_ >= 0.0 && mix_weight_ <= 1.0)) throw Error("noise spec: mix_weight outside [0, 1]");
    c1_ = factor(cov1_);
    if (kind_ == NoiseKind::gaussian_mixture) {
        if (cov2_.rows() != cov1_.rows() || cov2_.cols() != cov1_.cols())
            throw Error("noise spec: mixture covariances differ in dimension");
        c2_ = factor(cov2_);
    } else if (cov2_.size() == 0) {
        cov2_ = cov1_;
    }
}

NoiseSpec NoiseSpec::gaussian(const Mat& cov) { return NoiseSpec(NoiseKind::gaussian, cov, cov, 1.0); }

NoiseSpec NoiseSpec::mixture(const Mat& cov1, const Mat& cov2, double mix_weight)
{
    return NoiseSpec(NoiseKind::gaussian_mixture, cov1, cov2, mix_weight);
}

NoiseSpec NoiseSpec::zero(Eigen::Index dim) { return gaussian(Mat::Zero(dim, dim)); }

Mat NoiseSpec::moment_matched_cov() const
{
    if (kind_ == NoiseKind::gaussian) return cov1_;
    return mix_weight_ * cov1_ + (1.0 - mix_weight_) * cov2_;
}

Vec NoiseSpec::sample(Rng& rng) const
{
    const Eigen::Index n = dim();
    if (kind_ == NoiseKind::gaussian) return c1_.sqrt * standard_normal_vec(n, rng);
    const bool first = uniform01(rng) < mix_weight_;
    const Vec e = standard_normal_vec(n, rng);
    return first ? Vec(c1_.sqrt * e) : Vec(c2_.sqrt * e);
}

double NoiseSpec::log_density(const Vec& e) const
{
    auto component = [&](const Component& c) {
        if (c.inverse.size() == 0 && dim() > 0) throw Error("singular covariance");
        return c.log_norm - 0.5 * e.dot(c.inverse * e);
    };
    if (kind_ == NoiseKind::gaussian || mix_weight_ == 1.0) return component(c1_);
    if (mix_weight_ == 0.0) return component(c2_);
    const double a = std::log(mix_weight_) + component(c1_);
    const double b = std::log1p(-mix_weight_) + component(c2_);
    const double m = std::max(a, b);
    if (!std::isfinite(m)) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Vec sample_noise(const NoiseSpec& spec, Rng& rng) { return spec.sample(rng); }

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

Mat lorenz_system_matrix(const Vec& x)
{
    Mat a(3, 3);
    a << -10.0, 10.0, 0.0,
         28.0, -1.0, -x[0],
         0.0, x[0], -8.0 / 3.0;
    return a;
}

Mat lorenz_transition_matrix(const Vec& x, double delta, std::optional<int> order)
{
    if (x.size() != 3) throw Error("invalid state: Lorenz state must have dimension 3");
    if (!x.allFinite()) throw Error("invalid state");
    if (!(delta > 0.0)) throw Error("invalid step: delta must be positive");
    if (order && *order < 1) throw Error("invalid Taylor order");

    const Mat a = lorenz_system_matrix(x) * delta;
    Mat result = Mat::Identity(3, 3);
    Mat term = Mat::Identity(3, 3);
    const int max_terms = order ? *order : kExactMaxTerms;
    for (int j = 1; j <= max_terms; ++j) {
        term = term * a / static_cast<double>(j);
        result += term;
        if (!order && term.norm() < kExactTermTolerance) break;
    }
    return result;
}

WienerVelocityModel wiener_velocity_model(double delta_t, double q)
{
    if (!(delta_t > 0.0)) throw Error("invalid step: delta_t must be positive");
    if (!(q >= 0.0)) throw Error("invalid noise intensity");
    const double dt = delta_t;
    WienerVelocityModel m;
    m.motion = Mat::Identity(4, 4);
    m.motion(0, 2) = dt;
    m.motion(1, 3) = dt;

    const double q2 = q * q;
    m.process_cov = Mat::Zero(4, 4);
    for (int axis = 0; axis < 2; ++axis) {
        const int p = axis, v = axis + 2;
        m.process_cov(p, p) = q2 * dt * dt * dt / 3.0;
        m.process_cov(p, v) = q2 * dt * dt / 2.0;
        m.process_cov(v, p) = q2 * dt * dt / 2.0;
        m.process_cov(v, v) = q2 * dt;
    }
    return m;
}

void TransitionSpec::validate(Eigen::Index n_x) const
{
    if (!(delta > 0.0)) throw Error("transition: delta must be positive");
    switch (kind) {
    case TransitionKind::lorenz_taylor:
        if (n_x != 3) throw Error("transition: lorenz_taylor requires n_x = 3");
        if (taylor_order && *taylor_order < 1) throw Error("transition: taylor_order must be >= 1");
        break;
    case TransitionKind::wiener_velocity:
        if (n_x != 4) throw Error("transition: wiener_velocity requires n_x = 4");
        break;
    case TransitionKind::explicit_matrix:
        if (matrix.rows() != n_x || matrix.cols() != n_x) throw Error("transition: matrix must be n_x by n_x");
        break;
    }
}

Mat transition_matrix(const TransitionSpec& spec, const Vec& x)
{
    switch (spec.kind) {
    case TransitionKind::lorenz_taylor:
        return lorenz_transition_matrix(x, spec.delta, spec.taylor_order);
    case TransitionKind::wiener_velocity:
        return wiener_velocity_model(spec.delta, 0.0).motion;
    case TransitionKind::explicit_matrix:
        return spec.matrix;
    }
    throw Error("transition: unknown kind");
}

Vec propagate(const TransitionSpec& spec, const Vec& x) { return transition_matrix(spec, x) * x; }

// ---------------------------------------------------------------------------
// Measurements
// ---------------------------------------------------------------------------

Mat rotation_matrix(const std::array<double, 3>& euler_deg)
{
    constexpr double to_rad = std::numbers::pi / 180.0;
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(euler_deg[2] * to_rad, Eigen::Vector3d::UnitZ())
                               * Eigen::AngleAxisd(euler_deg[1] * to_rad, Eigen::Vector3d::UnitY())
                               * Eigen::AngleAxisd(euler_deg[0] * to_rad, Eigen::Vector3d::UnitX()))
                                  .toRotationMatrix();
    return r;
}

void MeasurementSpec::validate(Eigen::Index n_x, Eigen::Index n_z) const
{
    for (double a : euler_deg)
        if (!std::isfinite(a)) throw Error("measurement: rotation angle not finite");
    switch (kind) {
    case MeasurementKind::identity:
        if (n_z != n_x) throw Error("measurement: identity requires n_z = n_x");
        break;
    case MeasurementKind::rotated_identity:
    case MeasurementKind::cartesian_to_spherical:
        if (n_x != 3 || n_z != 3) throw Error("measurement: kind requires n_x = n_z = 3");
        break;
    case MeasurementKind::explicit_matrix:
        if (matrix.rows() != n_z || matrix.cols() != n_x) throw Error("measurement: matrix must be n_z by n_x");
        break;
    }
}

Vec measure(const MeasurementSpec& spec, const Vec& x)
{
    switch (spec.kind) {
    case MeasurementKind::identity:
        return x;
    case MeasurementKind::rotated_identity:
        return rotation_matrix(spec.euler_deg) * x;
    case MeasurementKind::cartesian_to_spherical: {
        const double r = x.norm();
        if (r == 0.0 || !std::isfinite(r)) throw Error("singular measurement");
        Vec z(3);
        z << r, std::atan2(x[1], x[0]), std::acos(std::clamp(x[2] / r, -1.0, 1.0));
        return z;
    }
    case MeasurementKind::explicit_matrix:
        return spec.matrix * x;
    }
    throw Error("measurement: unknown kind");
}

Vec measurement_residual(const MeasurementSpec& spec, const Vec& z, const Vec& zhat)
{
    Vec d = z - zhat;
    if (spec.kind == MeasurementKind::cartesian_to_spherical) {
        d[1] = std::remainder(d[1], 2.0 * std::numbers::pi);
    }
    return d;
}

Vec spherical_to_cartesian(const Vec& s)
{
    Vec x(3);
    const double r = s[0], az = s[1], incl = s[2];
    x << r * std::sin(incl) * std::cos(az), r * std::sin(incl) * std::sin(az), r * std::cos(incl);
    return x;
}

void SsmSpec::validate() const
{
    if (n_x < 1 || n_z < 1) throw Error("ssm: dimensions must be positive");
    transition.validate(n_x);
    measurement.validate(n_x, n_z);
    if (process_noise.dim() != n_x) throw Error("ssm: process noise dimension does not match n_x");
    if (meas_noise.dim() != n_z) throw Error("ssm: measurement noise dimension does not match n_z");
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

Trajectory simulate_trajectory(const SsmSpec& ssm, const Vec& x0, std::size_t horizon, Rng& rng)
{
    if (horizon < 1) throw Error("simulate: horizon must be >= 1");
    if (x0.size() != ssm.n_x || !x0.allFinite()) throw Error("invalid state");

    Trajectory traj;
    traj.states.reserve(horizon + 1);
    traj.measurements.reserve(horizon);
    traj.states.push_back(x0);
    for (std::size_t t = 1; t <= horizon; ++t) {
        Vec x = propagate(ssm.transition, traj.states.back()) + ssm.process_noise.sample(rng);
        Vec z = measure(ssm.measurement, x) + ssm.meas_noise.sample(rng);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceBound || !z.allFinite())
            throw Error("trajectory diverged");
        traj.states.push_back(std::move(x));
        traj.measurements.push_back(std::move(z));
    }
    return traj;
}

Vec lorenz_initial_state(Rng& rng, double delta, int burn_in)
{
    Vec x(3);
    for (int i = 0; i < 3; ++i) x[i] = 2.0 * uniform01(rng) - 1.0;
    for (int i = 0; i < burn_in; ++i) x = lorenz_transition_matrix(x, delta, std::nullopt) * x;
    return x;
}

NoiseLevels noise_levels(double inv_r2_db, double nu_db)
{
    NoiseLevels l;
    l.r2 = 1.0 / db_to_linear(inv_r2_db);
    l.q2 = db_to_linear(nu_db) * l.r2;
    return l;
}

SsmSpec make_lorenz_ssm(const LorenzScenario& s, const NoiseLevels& levels)
{
    SsmSpec ssm;
    ssm.n_x = 3;
    ssm.n_z = 3;
    ssm.transition.kind = TransitionKind::lorenz_taylor;
    ssm.transition.delta = s.delta;
    ssm.transition.taylor_order = s.taylor_order;
    ssm.measurement = s.measurement;

    const Mat q = levels.q2 * Mat::Identity(3, 3);
    const Mat r = levels.r2 * Mat::Identity(3, 3);
    if (s.noise == NoiseKind::gaussian) {
        ssm.process_noise = NoiseSpec::gaussian(q);
        ssm.meas_noise = NoiseSpec::gaussian(r);
    } else {
        ssm.process_noise = NoiseSpec::mixture(q, s.mix_scale * q, s.mix_weight);
        ssm.meas_noise = NoiseSpec::mixture(r, s.mix_scale * r, s.mix_weight);
    }
    ssm.validate();
    return ssm;
}

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

std::string to_string(NoiseKind kind) { return kind == NoiseKind::gaussian ? "gaussian" : "gaussian_mixture"; }

std::string to_string(TransitionKind kind)
{
    switch (kind) {
    case TransitionKind::lorenz_taylor: return "lorenz_taylor";
    case TransitionKind::wiener_velocity: return "wiener_velocity";
    case TransitionKind::explicit_matrix: return "explicit_matrix";
    }
    return "unknown";
}

std::string to_string(MeasurementKind kind)
{
    switch (kind) {
    case MeasurementKind::identity: return "identity";
    case MeasurementKind::rotated_identity: return "rotated_identity";
    case MeasurementKind::cartesian_to_spherical: return "cartesian_to_spherical";
    case MeasurementKind::explicit_matrix: return "explicit_matrix";
    }
    return "unknown";
}

NoiseKind noise_kind_from_string(const std::string& s)
{
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "gaussian_mixture") return NoiseKind::gaussian_mixture;
    throw Error("unknown noise kind '" + s + "'");
}

TransitionKind transition_kind_from_string(const std::string& s)
{
    if (s == "lorenz_taylor") return TransitionKind::lorenz_taylor;
    if (s == "wiener_velocity") return TransitionKind::wiener_velocity;
    if (s == "explicit_matrix") return TransitionKind::explicit_matrix;
    throw Error("unknown transition kind '" + s + "'");
}

MeasurementKind measurement_kind_from_string(const std::string& s)
{
    if (s == "identity") return MeasurementKind::identity;
    if (s == "rotated_identity") return MeasurementKind::rotated_identity;
    if (s == "cartesian_to_spherical") return MeasurementKind::cartesian_to_spherical;
    if (s == "explicit_matrix") return MeasurementKind::explicit_matrix;
    throw Error("unknown measurement kind '" + s + "'");
}

} // namespace trackdiff
