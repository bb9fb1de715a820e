#include "trackdiff/filters.hpp"

#include <cmath>
#include <limits>

namespace trackdiff {

namespace {

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// K = P_xz S^-1 via a Cholesky solve on the innovation covariance.
Mat gain(const Mat& cross, const Mat& innovation_cov)
{
    Eigen::LLT<Mat> llt(innovation_cov);
    if (llt.info() != Eigen::Success || !innovation_cov.allFinite()) throw Error("singular innovation");
    return llt.solve(cross.transpose()).transpose();
}

GaussianBelief linear_update(const Vec& m_pred, const Mat& p_pred, const Vec& innovation, const Mat& H, const Mat& R)
{
    const Mat S = H * p_pred * H.transpose() + R;
    const Mat K = gain(p_pred * H.transpose(), S);
    const Eigen::Index n = m_pred.size();
    const Mat ikh = Mat::Identity(n, n) - K * H;
    GaussianBelief post;
    post.mean = m_pred + K * innovation;
    post.cov = symmetrize(ikh * p_pred * ikh.transpose() + K * R * K.transpose());
    return post;
}

Mat matrix_sqrt(const Mat& p)
{
    Eigen::LLT<Mat> llt(p);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const Mat jittered = p + 1e-12 * Mat::Identity(p.rows(), p.cols());
    Eigen::LLT<Mat> retry(jittered);
    if (retry.info() != Eigen::Success) throw Error("sigma-point square root failed");
    return retry.matrixL();
}

Mat sigma_points(const Vec& mean, const Mat& cov, double lambda)
{
    const Eigen::Index n = mean.size();
    const Mat root = matrix_sqrt((static_cast<double>(n) + lambda) * cov);
    Mat pts(n, 2 * n + 1);
    pts.col(0) = mean;
    for (Eigen::Index i = 0; i < n; ++i) {
        pts.col(1 + i) = mean + root.col(i);
        pts.col(1 + n + i) = mean - root.col(i);
    }
    return pts;
}

} // namespace

void FilterConfig::validate() const
{
    if (pf_particles < 2) throw Error("filter config: pf_particles must be >= 2");
    if (!(pf_ess_fraction > 0.0 && pf_ess_fraction <= 1.0)) throw Error("filter config: pf_ess_fraction outside (0, 1]");
    if (!(jacobian_step > 0.0)) throw Error("filter config: jacobian_step must be positive");
    if (!(ukf_alpha > 0.0)) throw Error("filter config: ukf_alpha must be positive");
    if (!(init_cov >= 0.0)) throw Error("filter config: init_cov must be non-negative");
}

Mat numerical_jacobian(const VectorMap& fn, const Vec& x, double step)
{
    if (!(step > 0.0)) throw Error("jacobian: step must be positive");
    Mat jac;
    Vec probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const Vec hi = fn(probe);
        probe[i] = x[i] - step;
        const Vec lo = fn(probe);
        probe[i] = x[i];
        if (!hi.allFinite() || !lo.allFinite()) throw Error("jacobian: non-finite function value");
        if (i == 0) jac.resize(hi.size(), x.size());
        jac.col(i) = (hi - lo) / (2.0 * step);
    }
    return jac;
}

GaussianBelief kf_oracle_step(const GaussianBelief& belief, const Vec& z, const Mat& F, const Mat& H, const Mat& Q,
                              const Mat& R)
{
    const Vec m = F * belief.mean;
    const Mat p = F * belief.cov * F.transpose() + Q;
    const Mat S = H * p * H.transpose() + R;
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) throw Error("singular innovation");
    const Mat K = llt.solve(H * p).transpose();
    GaussianBelief post;
    post.mean = m + K * (z - H * m);
    post.cov = symmetrize(p - K * S * K.transpose());
    return post;
}

GaussianBelief ekf_step(const GaussianBelief& belief, const Vec& z, const SsmSpec& model, const FilterConfig& cfg)
{
    const auto f = [&](const Vec& x) { return propagate(model.transition, x); };
    const auto h = [&](const Vec& x) { return measure(model.measurement, x); };

    const Mat fj = numerical_jacobian(f, belief.mean, cfg.jacobian_step);
    const Vec m_pred = f(belief.mean);
    const Mat p_pred = symmetrize(fj * belief.cov * fj.transpose() + model.process_noise.moment_matched_cov());

    const Mat hj = numerical_jacobian(h, m_pred, cfg.jacobian_step);
    const Vec innovation = measurement_residual(model.measurement, z, h(m_pred));
    return linear_update(m_pred, p_pred, innovation, hj, model.meas_noise.moment_matched_cov());
}

SigmaWeights sigma_weights(Eigen::Index n, const FilterConfig& cfg)
{
    const double nd = static_cast<double>(n);
    SigmaWeights w;
    w.lambda = cfg.ukf_alpha * cfg.ukf_alpha * (nd + cfg.ukf_kappa) - nd;
    w.mean = Vec::Constant(2 * n + 1, 1.0 / (2.0 * (nd + w.lambda)));
    w.cov = w.mean;
    w.mean[0] = w.lambda / (nd + w.lambda);
    w.cov[0] = w.mean[0] + (1.0 - cfg.ukf_alpha * cfg.ukf_alpha + cfg.ukf_beta);
    return w;
}

GaussianBelief ukf_step(const GaussianBelief& belief, const Vec& z, const SsmSpec& model, const FilterConfig& cfg)
{
    const Eigen::Index n = belief.mean.size();
    const SigmaWeights w = sigma_weights(n, cfg);

    // Predict.
    const Mat prior_pts = sigma_points(belief.mean, belief.cov, w.lambda);
    Mat prop(n, prior_pts.cols());
    for (Eigen::Index i = 0; i < prior_pts.cols(); ++i) prop.col(i) = propagate(model.transition, prior_pts.col(i));
    const Vec m_pred = prop * w.mean;
    Mat p_pred = model.process_noise.moment_matched_cov();
    for (Eigen::Index i = 0; i < prop.cols(); ++i) {
        const Vec d = prop.col(i) - m_pred;
        p_pred += w.cov[i] * d * d.transpose();
    }
    p_pred = symmetrize(p_pred);

    // Update on freshly drawn sigma points around the prediction.
    const Mat pts = sigma_points(m_pred, p_pred, w.lambda);
    const Eigen::Index nz = model.n_z;
    Mat zs(nz, pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) zs.col(i) = measure(model.measurement, pts.col(i));
    // Mean through residuals about the central point keeps angular channels consistent.
    Vec z_off = Vec::Zero(nz);
    for (Eigen::Index i = 0; i < zs.cols(); ++i)
        z_off += w.mean[i] * measurement_residual(model.measurement, zs.col(i), zs.col(0));
    const Vec z_pred = zs.col(0) + z_off;

    Mat S = model.meas_noise.moment_matched_cov();
    Mat cross = Mat::Zero(n, nz);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Vec dz = measurement_residual(model.measurement, zs.col(i), z_pred);
        const Vec dx = pts.col(i) - m_pred;
        S += w.cov[i] * dz * dz.transpose();
        cross += w.cov[i] * dx * dz.transpose();
    }
    S = symmetrize(S);
    const Mat K = gain(cross, S);
    GaussianBelief post;
    post.mean = m_pred + K * measurement_residual(model.measurement, z, z_pred);
    post.cov = symmetrize(p_pred - K * S * K.transpose());
    return post;
}

// ---------------------------------------------------------------------------
// Particle filter
// ---------------------------------------------------------------------------

ParticleSet init_particles(const Vec& x0, double init_cov, int count, Rng& rng)
{
    if (count < 2) throw Error("particle set: need at least 2 particles");
    ParticleSet ps;
    ps.particles.resize(x0.size(), count);
    const double sd = std::sqrt(init_cov);
    for (int i = 0; i < count; ++i) ps.particles.col(i) = x0 + sd * standard_normal_vec(x0.size(), rng);
    ps.log_weights = Vec::Constant(count, -std::log(static_cast<double>(count)));
    return ps;
}

void normalize_log_weights(ParticleSet& ps)
{
    const double m = ps.log_weights.maxCoeff();
    if (!std::isfinite(m)) throw Error("particle degeneracy");
    const double lse = m + std::log((ps.log_weights.array() - m).exp().sum());
    ps.log_weights.array() -= lse;
}

double effective_sample_size(const ParticleSet& ps)
{
    const double m = ps.log_weights.maxCoeff();
    const Eigen::ArrayXd w = (ps.log_weights.array() - m).exp();
    const double s = w.sum();
    return s * s / w.square().sum();
}

ParticleSet systematic_resample(const ParticleSet& ps, Rng& rng)
{
    const Eigen::Index n = ps.size();
    const double m = ps.log_weights.maxCoeff();
    Eigen::ArrayXd w = (ps.log_weights.array() - m).exp();
    w /= w.sum();

    ParticleSet out;
    out.particles.resize(ps.particles.rows(), n);
    const double step = 1.0 / static_cast<double>(n);
    const double u0 = uniform01(rng) * step;
    double cumulative = w[0];
    Eigen::Index src = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = u0 + static_cast<double>(i) * step;
        while (u > cumulative && src + 1 < n) cumulative += w[++src];
        out.particles.col(i) = ps.particles.col(src);
    }
    out.log_weights = Vec::Constant(n, -std::log(static_cast<double>(n)));
    return out;
}

Vec particle_mean(const ParticleSet& ps)
{
    const double m = ps.log_weights.maxCoeff();
    const Vec w = (ps.log_weights.array() - m).exp().matrix();
    return ps.particles * w / w.sum();
}

namespace {

ParticleSet propagate_and_weight(const ParticleSet& ps, const Vec& z, const SsmSpec& model, Rng& rng)
{
    ParticleSet next;
    next.particles.resize(ps.particles.rows(), ps.size());
    next.log_weights.resize(ps.size());
    for (Eigen::Index i = 0; i < ps.size(); ++i) {
        Vec x = propagate(model.transition, ps.particles.col(i)) + model.process_noise.sample(rng);
        const Vec resid = measurement_residual(model.measurement, z, measure(model.measurement, x));
        next.log_weights[i] = ps.log_weights[i] + model.meas_noise.log_density(resid);
        next.particles.col(i) = x;
    }
    normalize_log_weights(next);
    return next;
}

ParticleSet maybe_resample(ParticleSet ps, const FilterConfig& cfg, Rng& rng)
{
    if (effective_sample_size(ps) < cfg.pf_ess_fraction * static_cast<double>(ps.size()))
        return systematic_resample(ps, rng);
    return ps;
}

} // namespace

ParticleSet pf_step(const ParticleSet& ps, const Vec& z, const SsmSpec& model, const FilterConfig& cfg, Rng& rng)
{
    return maybe_resample(propagate_and_weight(ps, z, model, rng), cfg, rng);
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

std::string to_string(ClassicalFilter f)
{
    switch (f) {
    case ClassicalFilter::ekf: return "ekf";
    case ClassicalFilter::ukf: return "ukf";
    case ClassicalFilter::pf: return "pf";
    }
    return "unknown";
}

std::vector<Vec> run_filter(ClassicalFilter kind, const std::vector<Vec>& measurements, const Vec& x0,
                            const SsmSpec& model, const FilterConfig& cfg, Rng& rng)
{
    cfg.validate();
    std::vector<Vec> out;
    out.reserve(measurements.size());
    if (kind == ClassicalFilter::pf) {
        ParticleSet ps = init_particles(x0, cfg.init_cov, cfg.pf_particles, rng);
        for (const Vec& z : measurements) {
            // Estimate from the weighted cloud before resampling.
            ParticleSet next = propagate_and_weight(ps, z, model, rng);
            out.push_back(particle_mean(next));
            ps = maybe_resample(std::move(next), cfg, rng);
        }
        return out;
    }

    const Eigen::Index n = x0.size();
    GaussianBelief b{x0, cfg.init_cov * Mat::Identity(n, n)};
    for (const Vec& z : measurements) {
        b = kind == ClassicalFilter::ekf ? ekf_step(b, z, model, cfg) : ukf_step(b, z, model, cfg);
        if (!b.mean.allFinite()) throw Error("filter diverged");
        out.push_back(b.mean);
    }
    return out;
}

} // namespace trackdiff
