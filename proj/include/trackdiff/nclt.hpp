#pragma once

#include "trackdiff/bench.hpp"
#include "trackdiff/dataset.hpp"

#include <filesystem>
#include <iosfwd>

namespace trackdiff {

/// Ingestion settings for the NCLT ground-truth and odometry CSV files.
/// Column indices are zero-based.
struct NcltConfig {
    std::size_t raw_points = 20000; // ground-truth rows used
    double rate_hz = 5.0;
    int n_trajectories = 25;
    int trajectory_length = 40;
    std::size_t train = 17, val = 3, test = 3;
    double timestamp_scale = 1e-6; // raw timestamp units to seconds
    int gt_time_col = 0, gt_x_col = 1, gt_y_col = 2;
    int odo_time_col = 0, odo_x_col = 1, odo_y_col = 2;
    /// false: odometry columns hold (vx, vy); true: they hold a pose (x, y)
    /// and velocities are differenced on the resampling grid.
    bool odometry_is_pose = false;
    int horizon = 40;
    int cond_length = 5;

    void validate() const;
};

struct TimedSeries {
    std::vector<double> time; // seconds
    std::vector<Eigen::Vector2d> value;
};

/// Reads (time, a, b) columns from a comma-separated file. Lines that do not
/// start with a number (headers, comments) are skipped. Stops after
/// `max_rows` rows when non-zero.
TimedSeries read_timed_series(std::istream& is, int time_col, int a_col, int b_col, double timestamp_scale,
                              std::size_t max_rows = 0);

/// Index of the nearest sample in `time` for every grid instant; `time` must
/// be non-decreasing.
std::vector<std::size_t> nearest_indices(const std::vector<double>& time, const std::vector<double>& grid);

/// Resampling grid t0, t0 + 1/rate, ... over the span of `time`, rounded to
/// the nearest whole number of steps (steps + 1 instants).
std::vector<double> resample_grid(const std::vector<double>& time, double rate_hz);

/// States (x1, x2, v1, v2) in a frame anchored at each trajectory's first
/// point; measurements are (integrated odometry position, odometry velocity).
std::vector<Trajectory> nclt_trajectories(const TimedSeries& ground_truth, const TimedSeries& odometry,
                                          const NcltConfig& cfg);

Dataset nclt_ingest(const std::filesystem::path& ground_truth_csv, const std::filesystem::path& odometry_csv,
                    const NcltConfig& cfg, std::uint64_t seed);
Dataset nclt_dataset(std::vector<Trajectory> trajectories, const NcltConfig& cfg, std::uint64_t seed);

/// Wiener-velocity SSM with q^2 and a diagonal R fitted on the training split.
SsmSpec fit_nclt_model(const Dataset& ds, double rate_hz);

/// Baseline (odometry integration), EKF and optionally TrackDiffuser on the
/// test split; MSE over the position channels.
MseReport run_nclt(const Dataset& ds, const NcltConfig& cfg, const std::vector<FilterKind>& filters,
                   const TrackDiffuserModel* model, const GuidanceConfig& guidance, std::uint64_t seed);

} // namespace trackdiff
