#include "trackdiff/dataset.hpp"
#include "trackdiff/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace trackdiff;

namespace {

DatasetConfig small_config(std::size_t n = 10)
{
    DatasetConfig c;
    c.n_trajectories = n;
    c.trajectory_length = 40;
    c.horizon = 40;
    c.cond_length = 5;
    return c;
}

SsmSpec lorenz() { return make_lorenz_ssm({}, noise_levels(10.0, -20.0)); }

} // namespace

TEST(Windowing, OneSamplePerTimeStep)
{
    DatasetConfig c = small_config();
    c.ratios = {1.0, 0.0, 0.0};
    const Dataset ds = build_lorenz_dataset(lorenz(), c, 1);
    EXPECT_EQ(ds.train.size() + ds.val.size() + ds.test.size(), 400u);
    EXPECT_EQ(ds.train.size(), 400u);
    EXPECT_EQ(ds.manifest.train_samples, 400u);
}

TEST(Windowing, PrefixMatchesSource)
{
    const Dataset ds = build_lorenz_dataset(lorenz(), small_config(), 2);
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
        for (const Sample& s : *split) {
            const Trajectory& tr = ds.trajectories[s.trajectory];
            const Eigen::Index h = s.tau0.horizon();
            EXPECT_EQ(s.tau0.real_slots(), static_cast<Eigen::Index>(s.time));
            EXPECT_EQ(s.tau0.slots.row(h - 1).transpose(), tr.states[s.time]);
            for (std::size_t m = 1; m < s.time; ++m)
                EXPECT_EQ(s.tau0.slots.row(h - 1 - static_cast<Eigen::Index>(s.time - m)).transpose(),
                          tr.measurements[m - 1]);
            EXPECT_TRUE(s.tau0.slots.topRows(h - static_cast<Eigen::Index>(s.time)).isZero(0.0));
            // The window ends with z_t.
            EXPECT_EQ(s.cond.row(s.cond.rows() - 1).transpose(), tr.measurements[s.time - 1]);
        }
    }
}

TEST(Windowing, StrideThins)
{
    Rng rng = make_rng(3, 0);
    const Trajectory tr = simulate_trajectory(lorenz(), lorenz_initial_state(rng), 40, rng);
    const auto s = window_trajectory(tr, 0, 40, 5, 4);
    ASSERT_EQ(s.size(), 10u);
    EXPECT_EQ(s[1].time, 5u);
    EXPECT_THROW(window_trajectory(tr, 0, 40, 5, 0), Error);
}

TEST(Normalization, TrainingSplitIsStandardized)
{
    const Dataset ds = build_lorenz_dataset(lorenz(), small_config(), 4);
    const auto normed = normalize_samples(ds.train, ds.manifest.normalizer);
    Vec sum = Vec::Zero(3), sq = Vec::Zero(3);
    double n = 0.0;
    for (const Sample& s : normed)
        for (Eigen::Index l = 0; l < s.tau0.horizon(); ++l)
            if (s.tau0.mask[l] != 0.0) {
                sum += s.tau0.slots.row(l).transpose();
                n += 1.0;
            }
    const Vec mean = sum / n;
    for (const Sample& s : normed)
        for (Eigen::Index l = 0; l < s.tau0.horizon(); ++l)
            if (s.tau0.mask[l] != 0.0) sq += (s.tau0.slots.row(l).transpose() - mean).array().square().matrix();
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(((sq / n).array().sqrt() - 1.0).abs().maxCoeff(), 1e-10);
}

TEST(Splits, DisjointCoverAndDeterministic)
{
    const SplitIndices a = split_indices(97, {}, 5);
    const SplitIndices b = split_indices(97, {}, 5);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    std::set<std::size_t> all;
    for (const auto* v : {&a.train, &a.val, &a.test, &a.unused}) all.insert(v->begin(), v->end());
    EXPECT_EQ(all.size(), 97u);
    EXPECT_EQ(a.train.size() + a.val.size() + a.test.size() + a.unused.size(), 97u);
    EXPECT_EQ(a.val.size(), 10u);
    EXPECT_NE(split_indices(97, {}, 6).train, a.train);
}

TEST(Splits, AllTrain)
{
    const SplitIndices s = split_indices(12, {1.0, 0.0, 0.0}, 1);
    EXPECT_EQ(s.train.size(), 12u);
    EXPECT_TRUE(s.val.empty());
    EXPECT_TRUE(s.test.empty());
}

TEST(Splits, Errors)
{
    EXPECT_THROW(split_indices(10, {0.5, 0.2, 0.2}, 1), Error);
    EXPECT_THROW(split_indices(2, {0.8, 0.1, 0.1}, 1), Error);
    EXPECT_THROW(split_indices(0, {1.0, 0.0, 0.0}, 1), Error);
    EXPECT_THROW(split_fixed(5, 4, 1, 1, 1), Error);
    const SplitIndices f = split_fixed(25, 17, 3, 3, 1);
    EXPECT_EQ(f.unused.size(), 2u);
}

TEST(Splits, NoTestTrajectoryInTraining)
{
    const Dataset ds = build_lorenz_dataset(lorenz(), small_config(20), 6);
    const std::set<std::size_t> test(ds.manifest.trajectories.test.begin(), ds.manifest.trajectories.test.end());
    ASSERT_FALSE(test.empty());
    for (const Sample& s : ds.train) EXPECT_EQ(test.count(s.trajectory), 0u);
    for (const Sample& s : ds.test) EXPECT_EQ(test.count(s.trajectory), 1u);
}

TEST(Manifest, JsonRoundTrip)
{
    Dataset ds = build_lorenz_dataset(lorenz(), small_config(), 7);
    ds.manifest.notes = {"a note", "another, with \"quotes\""};
    const DatasetManifest back = manifest_from_json(manifest_to_json(ds.manifest));
    EXPECT_TRUE(back == ds.manifest);
    EXPECT_EQ(back.normalizer.mean, ds.manifest.normalizer.mean);
    EXPECT_EQ(back.normalizer.std, ds.manifest.normalizer.std);
    ASSERT_TRUE(back.ssm.has_value());
    EXPECT_EQ(back.ssm->process_noise.cov1(), ds.manifest.ssm->process_noise.cov1());
    EXPECT_THROW(manifest_from_json("{}"), Error);
}

TEST(Manifest, DatasetSaveLoad)
{
    const Dataset ds = build_lorenz_dataset(lorenz(), small_config(), 8);
    const auto dir = std::filesystem::temp_directory_path() / "trackdiff_dataset_test";
    std::filesystem::remove_all(dir);
    save_dataset(dir, ds);
    const Dataset back = load_dataset(dir);
    std::filesystem::remove_all(dir);
    EXPECT_TRUE(back.manifest == ds.manifest);
    ASSERT_EQ(back.train.size(), ds.train.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        EXPECT_EQ(back.train[i].tau0.slots, ds.train[i].tau0.slots);
        EXPECT_EQ(back.train[i].cond, ds.train[i].cond);
    }
}

TEST(Generation, BitwiseReproducible)
{
    const Dataset a = build_lorenz_dataset(lorenz(), small_config(), 9);
    const Dataset b = build_lorenz_dataset(lorenz(), small_config(), 9);
    ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
    for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
        for (std::size_t t = 0; t < a.trajectories[i].states.size(); ++t)
            EXPECT_EQ(a.trajectories[i].states[t], b.trajectories[i].states[t]);
        for (std::size_t t = 0; t < a.trajectories[i].measurements.size(); ++t)
            EXPECT_EQ(a.trajectories[i].measurements[t], b.trajectories[i].measurements[t]);
    }
    EXPECT_TRUE(a.manifest == b.manifest);
}

TEST(Generation, ConfigValidation)
{
    DatasetConfig c = small_config();
    c.trajectory_length = 3;
    EXPECT_THROW(build_lorenz_dataset(lorenz(), c, 1), Error);
    c = small_config();
    c.ratios = {0.5, 0.5, 0.5};
    EXPECT_THROW(build_lorenz_dataset(lorenz(), c, 1), Error);
}
