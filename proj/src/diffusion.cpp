#include "trackdiff/diffusion.hpp"

#include <cmath>
#include <numbers>

namespace trackdiff {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::cosine ? "cosine" : "linear"; }

ScheduleKind schedule_kind_from_string(const std::string& s)
{
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "linear") return ScheduleKind::linear;
    throw Error("unknown schedule kind '" + s + "'");
}

std::string to_string(PredictShiftMode mode)
{
    return mode == PredictShiftMode::init_only ? "init_only" : "every_step";
}

PredictShiftMode predict_shift_mode_from_string(const std::string& s)
{
    if (s == "init_only") return PredictShiftMode::init_only;
    if (s == "every_step") return PredictShiftMode::every_step;
    throw Error("unknown predict shift mode '" + s + "'");
}

DiffusionSchedule build_schedule(int steps, ScheduleKind kind)
{
    if (steps < 1) throw Error("schedule: K must be >= 1");
    DiffusionSchedule s;
    s.steps = steps;
    s.kind = kind;
    const auto n = static_cast<std::size_t>(steps);
    s.betas.resize(n);
    if (kind == ScheduleKind::cosine) {
        const auto f = [&](int k) {
            const double c = std::cos((static_cast<double>(k) / steps + kCosineOffset) / (1.0 + kCosineOffset)
                                      * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0);
        double prev = 1.0;
        for (int k = 1; k <= steps; ++k) {
            const double abar = f(k) / f0;
            s.betas[static_cast<std::size_t>(k - 1)] = std::min(1.0 - abar / prev, 0.999);
            prev = abar;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            s.betas[i] = n == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    s.alphas.resize(n);
    s.alpha_bars.resize(n);
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        s.alphas[i] = 1.0 - s.betas[i];
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    return s;
}

Eigen::Index DiffusionTrajectory::real_slots() const { return static_cast<Eigen::Index>(mask.sum()); }

DiffusionTrajectory assemble_trajectory(const std::vector<Vec>& past_measurements, const Vec& state, int horizon)
{
    if (horizon < 1) throw Error("trajectory: horizon must be >= 1");
    const Eigen::Index n_x = state.size();
    DiffusionTrajectory tau;
    tau.slots = Mat::Zero(horizon, n_x);
    tau.mask = Vec::Zero(horizon);
    const std::size_t keep = std::min(past_measurements.size(), static_cast<std::size_t>(horizon - 1));
    const std::size_t first = past_measurements.size() - keep;
    const Eigen::Index offset = horizon - 1 - static_cast<Eigen::Index>(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        const Vec& z = past_measurements[first + i];
        if (z.size() != n_x) throw Error("shape mismatch: measurement width differs from state width");
        tau.slots.row(offset + static_cast<Eigen::Index>(i)) = z.transpose();
        tau.mask[offset + static_cast<Eigen::Index>(i)] = 1.0;
    }
    tau.slots.row(horizon - 1) = state.transpose();
    tau.mask[horizon - 1] = 1.0;
    return tau;
}

Mat condition_window(const std::vector<Vec>& measurements, int length)
{
    if (measurements.empty()) throw Error("condition window: no measurements");
    const Eigen::Index n_z = measurements.front().size();
    Mat w(length, n_z);
    const auto count = static_cast<long>(measurements.size());
    for (int i = 0; i < length; ++i) {
        const long src = std::max(0L, count - length + i);
        w.row(i) = measurements[static_cast<std::size_t>(src)].transpose();
    }
    return w;
}

DiffusionTrajectory q_sample(const DiffusionTrajectory& tau0, int k, const Mat& eps, const DiffusionSchedule& sched)
{
    if (k < 1 || k > sched.steps) throw Error("q_sample: step outside [1, K]");
    if (eps.rows() != tau0.slots.rows() || eps.cols() != tau0.slots.cols()) throw Error("shape mismatch: noise");
    const double a = std::sqrt(sched.alpha_bar(k));
    const double b = std::sqrt(1.0 - sched.alpha_bar(k));
    DiffusionTrajectory out = tau0;
    for (Eigen::Index l = 0; l < tau0.horizon(); ++l)
        if (tau0.mask[l] != 0.0) out.slots.row(l) = a * tau0.slots.row(l) + b * eps.row(l);
    return out;
}

PosteriorCoefficients posterior_coefficients(const DiffusionSchedule& sched, int k)
{
    if (k < 1 || k > sched.steps) throw Error("denoise: step outside [1, K]");
    const double abar = sched.alpha_bar(k);
    const double abar_prev = sched.alpha_bar(k - 1);
    const double beta = sched.beta(k);
    PosteriorCoefficients c;
    c.c0 = std::sqrt(abar_prev) * beta / (1.0 - abar);
    c.ck = std::sqrt(sched.alpha(k)) * (1.0 - abar_prev) / (1.0 - abar);
    c.var = (1.0 - abar_prev) / (1.0 - abar) * beta;
    return c;
}

DiffusionTrajectory denoise_step(const DiffusionTrajectory& tau_k, const Mat& tau0_hat, int k,
                                 const DiffusionSchedule& sched, double temp_scale, Rng& rng)
{
    if (tau0_hat.rows() != tau_k.slots.rows() || tau0_hat.cols() != tau_k.slots.cols())
        throw Error("shape mismatch: tau0 estimate");
    DiffusionTrajectory out = tau_k;
    if (k == 1) {
        // abar_0 = 1 makes the posterior collapse onto the tau_0 estimate.
        for (Eigen::Index l = 0; l < out.horizon(); ++l)
            if (out.mask[l] != 0.0) out.slots.row(l) = tau0_hat.row(l);
        return out;
    }
    const PosteriorCoefficients c = posterior_coefficients(sched, k);
    const double sd = std::sqrt(temp_scale * c.var);
    for (Eigen::Index l = 0; l < out.horizon(); ++l) {
        if (out.mask[l] == 0.0) continue;
        for (Eigen::Index d = 0; d < out.slots.cols(); ++d) {
            const double mu = c.c0 * tau0_hat(l, d) + c.ck * tau_k.slots(l, d);
            out.slots(l, d) = mu + sd * standard_normal(rng);
        }
    }
    return out;
}

Mat guided_tau0(const Denoiser& model, const DiffusionTrajectory& tau_k, const Mat& cond, int k, double omega)
{
    const Eigen::Index h = tau_k.horizon();
    DenoiserInput in;
    in.tau.resize(tau_k.slots.cols(), 2 * h);
    in.tau.leftCols(h) = tau_k.slots.transpose();
    in.tau.rightCols(h) = tau_k.slots.transpose();
    in.mask.resize(1, 2 * h);
    in.mask.leftCols(h) = tau_k.mask.transpose();
    in.mask.rightCols(h) = tau_k.mask.transpose();
    const Mat flat = cond.transpose().reshaped(cond.size(), 1);
    in.cond.resize(cond.size(), 2);
    in.cond.col(0) = flat;
    in.cond.col(1) = flat;
    in.k = {k, k};
    in.null_cond = {false, true};
    const Mat out = model.predict(in);
    const Mat conditional = out.leftCols(h).transpose();
    const Mat unconditional = out.rightCols(h).transpose();
    return unconditional + omega * (conditional - unconditional);
}

Normalizer Normalizer::identity(Eigen::Index n) { return Normalizer{Vec::Zero(n), Vec::Ones(n)}; }

void GuidanceConfig::validate() const
{
    if (!(temp_scale >= 0.0 && temp_scale <= 1.0)) throw Error("guidance: temp_scale outside [0, 1]");
    if (!(omega >= 0.0)) throw Error("guidance: omega must be non-negative");
}

// ---------------------------------------------------------------------------
// TrackDiffuser
// ---------------------------------------------------------------------------

TrackDiffuser::TrackDiffuser(const Denoiser& model, int horizon, int cond_length, DiffusionSchedule schedule,
                             GuidanceConfig guidance, Normalizer normalizer, Transition transition)
    : model_(model),
      horizon_(horizon),
      cond_length_(cond_length),
      schedule_(std::move(schedule)),
      guidance_(guidance),
      normalizer_(std::move(normalizer)),
      transition_(std::move(transition))
{
    guidance_.validate();
    if (horizon_ < cond_length_ || cond_length_ < 1) throw Error("track: need horizon >= cond_length >= 1");
    if (schedule_.steps < 1) throw Error("track: empty schedule");
}

std::vector<Vec> TrackDiffuser::step_lanes(std::vector<Lane*>& lanes) const
{
    const std::size_t nb = lanes.size();
    const Eigen::Index h = horizon_;
    const Eigen::Index n_x = normalizer_.mean.size();
    const auto b = static_cast<Eigen::Index>(nb);

    std::vector<DiffusionTrajectory> observed(nb), tau(nb);
    std::vector<Vec> shift(nb);
    Mat cond(static_cast<Eigen::Index>(cond_length_) * n_x, 2 * b);

    for (std::size_t i = 0; i < nb; ++i) {
        Lane& lane = *lanes[i];
        std::vector<Vec> normed;
        normed.reserve(lane.history.size());
        for (const Vec& z : lane.history) {
            if (z.size() != n_x) throw Error("shape mismatch: measurement width must equal state width");
            normed.push_back(normalizer_.normalize(z));
        }
        const std::vector<Vec> past(normed.begin(), normed.end() - 1);
        observed[i] = assemble_trajectory(past, Vec::Zero(n_x), horizon_);

        const Mat window = condition_window(normed, cond_length_);
        const Mat flat = window.transpose().reshaped(window.size(), 1);
        cond.col(static_cast<Eigen::Index>(i)) = flat;
        cond.col(b + static_cast<Eigen::Index>(i)) = flat;

        shift[i] = normalizer_.normalize(transition_(lane.x_prev));
        if (!shift[i].allFinite()) throw Error("filter diverged");

        // Terminal sample: N(0, temp_scale I) on real slots.
        DiffusionTrajectory& t = tau[i];
        t.mask = observed[i].mask;
        t.slots = Mat::Zero(h, n_x);
        const double sd = std::sqrt(guidance_.temp_scale);
        for (Eigen::Index l = 0; l < h; ++l)
            if (t.mask[l] != 0.0)
                for (Eigen::Index d = 0; d < n_x; ++d) t.slots(l, d) = sd * standard_normal(*lane.rng);
        if (guidance_.predict_shift_mode == PredictShiftMode::init_only) t.slots.row(h - 1) += shift[i].transpose();
    }

    const auto clamp = [&](std::size_t i) {
        for (Eigen::Index l = 0; l < h - 1; ++l)
            if (observed[i].mask[l] != 0.0) tau[i].slots.row(l) = observed[i].slots.row(l);
    };

    DenoiserInput in;
    in.cond = std::move(cond);
    in.mask.resize(1, 2 * b * h);
    for (std::size_t i = 0; i < nb; ++i) {
        const auto off = static_cast<Eigen::Index>(i) * h;
        in.mask.middleCols(off, h) = observed[i].mask.transpose();
        in.mask.middleCols(b * h + off, h) = observed[i].mask.transpose();
    }
    in.null_cond.assign(2 * nb, false);
    std::fill(in.null_cond.begin() + static_cast<long>(nb), in.null_cond.end(), true);
    in.tau.resize(n_x, 2 * b * h);

    for (std::size_t i = 0; i < nb; ++i) clamp(i);
    for (int k = schedule_.steps; k >= 1; --k) {
        for (std::size_t i = 0; i < nb; ++i) {
            if (guidance_.predict_shift_mode == PredictShiftMode::every_step)
                tau[i].slots.row(h - 1) += shift[i].transpose();
            const auto off = static_cast<Eigen::Index>(i) * h;
            in.tau.middleCols(off, h) = tau[i].slots.transpose();
            in.tau.middleCols(b * h + off, h) = tau[i].slots.transpose();
        }
        in.k.assign(2 * nb, k);
        const Mat out = model_.predict(in);
        for (std::size_t i = 0; i < nb; ++i) {
            const auto off = static_cast<Eigen::Index>(i) * h;
            const Mat conditional = out.middleCols(off, h).transpose();
            const Mat unconditional = out.middleCols(b * h + off, h).transpose();
            const Mat hat = unconditional + guidance_.omega * (conditional - unconditional);
            tau[i] = denoise_step(tau[i], hat, k, schedule_, guidance_.temp_scale, *lanes[i]->rng);
            clamp(i);
            if (observer_) observer_(i, k, tau[i]);
        }
    }

    std::vector<Vec> estimates(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        const Vec x = normalizer_.denormalize(tau[i].slots.row(h - 1).transpose());
        if (!x.allFinite()) throw Error("filter diverged");
        estimates[i] = x;
    }
    return estimates;
}

Vec TrackDiffuser::step(std::deque<Vec>& history, const Vec& x_prev, const Vec& z_t, Rng& rng) const
{
    history.push_back(z_t);
    while (history.size() > static_cast<std::size_t>(horizon_)) history.pop_front();
    Lane lane{history, x_prev, &rng};
    std::vector<Lane*> lanes{&lane};
    return step_lanes(lanes).front();
}

std::vector<Vec> TrackDiffuser::track(const std::vector<Vec>& measurements, const Vec& x0, Rng& rng) const
{
    std::vector<Vec> out;
    out.reserve(measurements.size());
    std::deque<Vec> history;
    Vec x_prev = x0;
    for (const Vec& z : measurements) {
        x_prev = step(history, x_prev, z, rng);
        out.push_back(x_prev);
    }
    return out;
}

std::vector<std::vector<Vec>> TrackDiffuser::track_batch(const std::vector<std::vector<Vec>>& measurements,
                                                         const std::vector<Vec>& x0, std::vector<Rng>& rngs) const
{
    const std::size_t n = measurements.size();
    if (x0.size() != n || rngs.size() != n) throw Error("track_batch: argument lengths differ");
    std::vector<Lane> lanes(n);
    std::vector<std::vector<Vec>> out(n);
    std::size_t longest = 0;
    for (std::size_t i = 0; i < n; ++i) {
        lanes[i].x_prev = x0[i];
        lanes[i].rng = &rngs[i];
        out[i].reserve(measurements[i].size());
        longest = std::max(longest, measurements[i].size());
    }
    for (std::size_t t = 0; t < longest; ++t) {
        std::vector<Lane*> active;
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < n; ++i) {
            if (t >= measurements[i].size()) continue;
            Lane& lane = lanes[i];
            lane.history.push_back(measurements[i][t]);
            while (lane.history.size() > static_cast<std::size_t>(horizon_)) lane.history.pop_front();
            active.push_back(&lane);
            ids.push_back(i);
        }
        const std::vector<Vec> est = step_lanes(active);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            lanes[ids[j]].x_prev = est[j];
            out[ids[j]].push_back(est[j]);
        }
    }
    return out;
}

} // namespace trackdiff
