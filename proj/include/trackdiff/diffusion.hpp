#pragma once

#include "trackdiff/denoiser.hpp"

#include <deque>

namespace trackdiff {

// ---------------------------------------------------------------------------
// DDPM schedule and primitives
// ---------------------------------------------------------------------------

enum class ScheduleKind { cosine, linear };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

/// Per-step noise schedule, indexed 1..K. alpha_bar(0) is 1 by convention.
struct DiffusionSchedule {
    int steps = 0;
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<double> betas;      // betas[k - 1]
    std::vector<double> alphas;     // 1 - beta
    std::vector<double> alpha_bars; // running product of alphas

    double beta(int k) const { return betas[static_cast<std::size_t>(k - 1)]; }
    double alpha(int k) const { return alphas[static_cast<std::size_t>(k - 1)]; }
    double alpha_bar(int k) const { return k == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(k - 1)]; }
};

DiffusionSchedule build_schedule(int steps, ScheduleKind kind);

/// Cosine-schedule offset s.
inline constexpr double kCosineOffset = 0.008;

/// A horizon-length trajectory (z_1, ..., z_{t-1}, x_t) right-aligned in H
/// slots. Rows are slots; padded rows are zero with mask 0. The state slot is
/// always the last row.
struct DiffusionTrajectory {
    Mat slots; // H x n_x
    Vec mask;  // H

    Eigen::Index horizon() const { return slots.rows(); }
    Eigen::Index state_index() const { return slots.rows() - 1; }
    Eigen::Index real_slots() const;
};

/// Places the most recent H - 1 of `past_measurements` and `state` into H slots.
DiffusionTrajectory assemble_trajectory(const std::vector<Vec>& past_measurements, const Vec& state, int horizon);

/// Last L measurements (z_{t-L+1..t}) as an L x n_z array, left-padded with
/// the earliest available measurement when fewer than L exist.
Mat condition_window(const std::vector<Vec>& measurements, int length);

/// sqrt(abar_k) tau_0 + sqrt(1 - abar_k) eps on real slots.
DiffusionTrajectory q_sample(const DiffusionTrajectory& tau0, int k, const Mat& eps, const DiffusionSchedule& sched);

/// Coefficients of the DDPM posterior q(tau_{k-1} | tau_k, tau_0):
/// mean = c0 * tau_0 + ck * tau_k, variance = var * I.
struct PosteriorCoefficients {
    double c0 = 0.0;
    double ck = 0.0;
    double var = 0.0;
};
PosteriorCoefficients posterior_coefficients(const DiffusionSchedule& sched, int k);

/// One reverse step. At k = 1 returns the posterior mean (tau0_hat) without noise.
DiffusionTrajectory denoise_step(const DiffusionTrajectory& tau_k, const Mat& tau0_hat, int k,
                                 const DiffusionSchedule& sched, double temp_scale, Rng& rng);

/// uncond + omega * (cond - uncond) for a single trajectory.
Mat guided_tau0(const Denoiser& model, const DiffusionTrajectory& tau_k, const Mat& cond, int k, double omega);

// ---------------------------------------------------------------------------
// Normalisation
// ---------------------------------------------------------------------------

/// Per-dimension standardisation shared by states and measurements.
struct Normalizer {
    Vec mean;
    Vec std;

    static Normalizer identity(Eigen::Index n);
    Vec normalize(const Vec& x) const { return ((x - mean).array() / std.array()).matrix(); }
    Vec denormalize(const Vec& u) const { return (u.array() * std.array()).matrix() + mean; }
};

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

enum class PredictShiftMode { init_only, every_step };

std::string to_string(PredictShiftMode mode);
PredictShiftMode predict_shift_mode_from_string(const std::string& s);

struct GuidanceConfig {
    double omega = 1.2;
    double temp_scale = 0.5;
    PredictShiftMode predict_shift_mode = PredictShiftMode::init_only;

    void validate() const;
};

/// Diffusion-based Bayesian filter. Holds immutable model state; every call
/// takes its own random source, so one instance can serve many threads.
class TrackDiffuser {
public:
    using Transition = std::function<Vec(const Vec&)>;

    TrackDiffuser(const Denoiser& model, int horizon, int cond_length, DiffusionSchedule schedule,
                  GuidanceConfig guidance, Normalizer normalizer, Transition transition);

    /// One filtering step. Appends z_t to `history` (capped at the horizon)
    /// and returns the posterior estimate of x_t.
    Vec step(std::deque<Vec>& history, const Vec& x_prev, const Vec& z_t, Rng& rng) const;

    /// Filters one measurement sequence from the known initial state.
    std::vector<Vec> track(const std::vector<Vec>& measurements, const Vec& x0, Rng& rng) const;

    /// Filters many sequences in lockstep, batching the network calls.
    /// rngs[i] drives trajectory i only.
    std::vector<std::vector<Vec>> track_batch(const std::vector<std::vector<Vec>>& measurements,
                                              const std::vector<Vec>& x0, std::vector<Rng>& rngs) const;

    /// Called after every reverse step with the lane index, the step k just
    /// completed, and the normalised tau_{k-1}. Not thread-safe; for tests.
    using StepObserver = std::function<void(std::size_t, int, const DiffusionTrajectory&)>;
    void set_observer(StepObserver obs) { observer_ = std::move(obs); }

    const DiffusionSchedule& schedule() const { return schedule_; }
    const GuidanceConfig& guidance() const { return guidance_; }
    const Normalizer& normalizer() const { return normalizer_; }

private:
    struct Lane {
        std::deque<Vec> history; // physical measurements, newest last
        Vec x_prev;
        Rng* rng = nullptr;
    };
    std::vector<Vec> step_lanes(std::vector<Lane*>& lanes) const;

    const Denoiser& model_;
    int horizon_;
    int cond_length_;
    DiffusionSchedule schedule_;
    GuidanceConfig guidance_;
    Normalizer normalizer_;
    Transition transition_;
    StepObserver observer_;
};

} // namespace trackdiff
