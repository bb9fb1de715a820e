#pragma once

#include "trackdiff/diffusion.hpp"
#include "trackdiff/ssm.hpp"

#include <filesystem>

namespace trackdiff {

/// One training example: the clean trajectory (z_1, ..., z_{t-1}, x_t) and
/// the conditioning window z_{t-L+1..t}. Values are in physical units.
struct Sample {
    DiffusionTrajectory tau0;
    Mat cond;                   // L x n_z
    std::size_t trajectory = 0; // source trajectory index
    std::size_t time = 0;       // t, 1-based
    std::string scenario_id;
};

/// Windowing of one trajectory into samples for t = 1, 1 + stride, ..., T.
std::vector<Sample> window_trajectory(const Trajectory& traj, std::size_t trajectory_index, int horizon,
                                      int cond_length, int stride = 1, const std::string& scenario_id = {});

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test, unused;
};

/// Deterministic shuffle of [0, n) into splits. With `fixed` counts the
/// ratios are ignored and any remainder is reported as unused.
SplitIndices split_indices(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);
SplitIndices split_fixed(std::size_t n, std::size_t train, std::size_t val, std::size_t test, std::uint64_t seed);

/// Per-dimension mean/std over every real slot of the samples.
Normalizer fit_normalizer(const std::vector<Sample>& samples);

struct DatasetConfig {
    std::size_t n_trajectories = 2000;
    int trajectory_length = 40; // T
    int horizon = 40;           // H
    int cond_length = 5;        // L
    int stride = 1;
    SplitRatios ratios;

    void validate() const;
};

struct DatasetManifest {
    std::string scenario_id;
    std::uint64_t seed = 0;
    std::optional<SsmSpec> ssm;
    int trajectory_length = 0;
    int horizon = 0;
    int cond_length = 0;
    int stride = 1;
    std::size_t train_samples = 0, val_samples = 0, test_samples = 0;
    SplitIndices trajectories; // trajectory indices per split
    Normalizer normalizer;
    std::vector<std::string> notes;

    bool operator==(const DatasetManifest& other) const;
};

/// Trajectories grouped by split plus their windowed samples.
struct Dataset {
    std::vector<Trajectory> trajectories; // indexed by trajectory id
    std::vector<Sample> train, val, test;
    DatasetManifest manifest;
};

/// Simulates `n_trajectories` Lorenz trajectories from random attractor
/// states, splits by trajectory, windows every prefix, and fits the
/// normaliser on the training split. Trajectory i uses make_rng(seed, i).
Dataset build_lorenz_dataset(const SsmSpec& ssm, const DatasetConfig& cfg, std::uint64_t seed,
                             const std::string& scenario_id = "lorenz");

/// Splits pre-built trajectories and windows them; used by both Lorenz and NCLT.
Dataset assemble_dataset(std::vector<Trajectory> trajectories, const SplitIndices& split, const DatasetConfig& cfg,
                         std::uint64_t seed, const std::string& scenario_id);

/// Writes train.csv, val.csv, test.csv (multi-trajectory format) and manifest.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

} // namespace trackdiff
