#pragma once

#include "trackdiff/ssm.hpp"

#include <filesystem>
#include <iosfwd>

namespace trackdiff {

/// Columnar text layout for trajectories.
///
///     t,x1,...,xN,z1,...,zM[,xhat1,...,xhatN]
///
/// Row t = 0 carries x_0 with the measurement (and estimate) columns set to
/// "nan"; rows t = 1..T carry x_t, z_t and optionally the estimate of x_t.
/// Multi-trajectory files prepend a `traj` column holding the trajectory id.
struct TrajectoryRecord {
    std::size_t id = 0;
    Trajectory trajectory;
    std::vector<Vec> estimates; // empty, or one per measurement
};

void write_trajectory(std::ostream& os, const Trajectory& traj, const std::vector<Vec>& estimates = {});
void write_trajectory_file(const std::filesystem::path& path, const Trajectory& traj,
                           const std::vector<Vec>& estimates = {});

void write_trajectories(std::ostream& os, const std::vector<TrajectoryRecord>& records);
void write_trajectories_file(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records);

/// Parses either layout. Dimensions are taken from the header.
std::vector<TrajectoryRecord> read_trajectories(std::istream& is);
std::vector<TrajectoryRecord> read_trajectories_file(const std::filesystem::path& path);

} // namespace trackdiff
