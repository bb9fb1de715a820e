#include "checks.hpp"

#include "trackdiff/checkpoint.hpp"
#include "trackdiff/train.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace trackdiff;

namespace {

struct Fixture {
    NetConfig net = checks::tiny_net();
    Dataset ds;
    DiffusionSchedule sched = build_schedule(10, ScheduleKind::cosine);
    SsmSpec ssm = make_lorenz_ssm({}, noise_levels(10.0, -20.0));

    explicit Fixture(std::size_t trajectories = 4)
    {
        DatasetConfig dc;
        dc.n_trajectories = trajectories;
        dc.trajectory_length = 8;
        dc.horizon = net.horizon;
        dc.cond_length = net.cond_length;
        dc.ratios = {1.0, 0.0, 0.0};
        ds = build_lorenz_dataset(ssm, dc, 3);
    }

    std::function<Vec(const Vec&)> f() const
    {
        return [t = ssm.transition](const Vec& x) { return propagate(t, x); };
    }
};

} // namespace

TEST(Adam, MatchesHandComputedFirstStep)
{
    DenoiserParams p({{"w", Mat::Constant(1, 2, 1.0)}});
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.grad_clip = 0.0;
    AdamOptimizer adam(p, cfg);
    std::vector<Mat> g{(Mat(1, 2) << 0.5, -2.0).finished()};
    adam.step(p, g);
    // Bias-corrected first step moves each entry by lr * sign(g) (up to eps).
    EXPECT_NEAR(p.at("w")(0, 0), 0.9, 1e-6);
    EXPECT_NEAR(p.at("w")(0, 1), 1.1, 1e-6);
}

TEST(Adam, ClipsGlobalNorm)
{
    DenoiserParams p({{"a", Mat::Zero(1, 1)}, {"b", Mat::Zero(1, 1)}});
    TrainConfig cfg;
    cfg.grad_clip = 1.0;
    AdamOptimizer adam(p, cfg);
    std::vector<Mat> g{Mat::Constant(1, 1, 3.0), Mat::Constant(1, 1, 4.0)};
    EXPECT_DOUBLE_EQ(adam.step(p, g), 5.0);
    EXPECT_NEAR(g[0](0, 0), 0.6, 1e-15);
    EXPECT_NEAR(g[1](0, 0), 0.8, 1e-15);
    std::vector<Mat> bad{Mat::Constant(1, 1, NAN), Mat::Zero(1, 1)};
    EXPECT_THROW(adam.step(p, bad), Error);
}

TEST(Batch, ClampsObservedSlotsAndKeepsTargets)
{
    Fixture fx;
    Rng rng = make_rng(1, 0);
    const auto data = normalize_samples(fx.ds.train, fx.ds.manifest.normalizer);
    const std::vector<std::size_t> idx{0, 3, 7, 12};
    const TrainingBatch b = make_training_batch(data, idx, fx.sched, 0.5, rng);
    const Eigen::Index h = fx.net.horizon;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Sample& s = data[idx[i]];
        const auto off = static_cast<Eigen::Index>(i) * h;
        EXPECT_EQ(b.target.middleCols(off, h), s.tau0.slots.transpose());
        for (Eigen::Index l = 0; l < h - 1; ++l)
            if (s.tau0.mask[l] != 0.0) EXPECT_EQ(b.input.tau.col(off + l), s.tau0.slots.row(l).transpose());
        EXPECT_GE(b.input.k[i], 1);
        EXPECT_LE(b.input.k[i], fx.sched.steps);
    }
}

TEST(Batch, DropoutProbabilityExtremes)
{
    Fixture fx;
    Rng rng = make_rng(2, 0);
    std::vector<std::size_t> idx(fx.ds.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto none = make_training_batch(fx.ds.train, idx, fx.sched, 0.0, rng).input.null_cond;
    const auto all = make_training_batch(fx.ds.train, idx, fx.sched, 1.0, rng).input.null_cond;
    EXPECT_TRUE(std::none_of(none.begin(), none.end(), [](bool b) { return b; }));
    EXPECT_TRUE(std::all_of(all.begin(), all.end(), [](bool b) { return b; }));
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged)
{
    Fixture fx(2);
    std::vector<Sample> ten(fx.ds.train.begin(), fx.ds.train.begin() + 10);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    Rng init_rng = make_rng(3, 0);
    const DenoiserParams start = init_params(fx.net, init_rng);
    Rng rng = make_rng(4, 0);
    const TrainResult r = train(ten, fx.ds.manifest.normalizer, fx.net, cfg, fx.sched, fx.f(), start, rng);
    ASSERT_EQ(r.params.size(), start.size());
    for (std::size_t i = 0; i < start.size(); ++i)
        EXPECT_EQ(std::memcmp(r.params.tensors()[i].value.data(), start.tensors()[i].value.data(),
                              sizeof(double) * static_cast<std::size_t>(start.tensors()[i].value.size())),
                  0);
}

TEST(Train, HistoryLengthAndCheckpoint)
{
    Fixture fx(2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.steps_per_epoch = 2;
    const auto path = std::filesystem::temp_directory_path() / "trackdiff_train_ckpt.bin";
    std::vector<int> seen;
    TrainOptions opts;
    opts.checkpoint_path = path;
    opts.on_epoch = [&](int e, double) { seen.push_back(e); };
    Rng rng = make_rng(5, 0);
    const TrainResult r = train(fx.ds.train, fx.ds.manifest.normalizer, fx.net, cfg, fx.sched, fx.f(), {}, rng, opts);
    EXPECT_EQ(r.loss_history.size(), 3u);
    EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
    const TrackDiffuserModel m = load_checkpoint(path);
    EXPECT_TRUE(m.params == r.params);
    EXPECT_EQ(m.diffusion_steps, fx.sched.steps);

    const auto hist = std::filesystem::temp_directory_path() / "trackdiff_loss.txt";
    write_loss_history(hist, r.loss_history);
    std::ifstream in(hist);
    int epoch = 0, lines = 0;
    double loss = 0.0;
    while (in >> epoch >> loss) EXPECT_EQ(loss, r.loss_history[static_cast<std::size_t>(lines++)]);
    EXPECT_EQ(lines, 3);
    std::filesystem::remove(path);
    std::filesystem::remove(hist);
}

TEST(Train, BitwiseReproducible)
{
    Fixture fx(2);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 6;
    cfg.steps_per_epoch = 3;
    Rng a = make_rng(6, 0), b = make_rng(6, 0);
    const TrainResult ra = train(fx.ds.train, fx.ds.manifest.normalizer, fx.net, cfg, fx.sched, fx.f(), {}, a);
    const TrainResult rb = train(fx.ds.train, fx.ds.manifest.normalizer, fx.net, cfg, fx.sched, fx.f(), {}, b);
    EXPECT_TRUE(ra.params == rb.params);
    EXPECT_EQ(ra.loss_history, rb.loss_history);
}

TEST(Train, OverfitsFiveSamples)
{
    Fixture fx(1);
    const std::vector<Sample> five{fx.ds.train[3], fx.ds.train[4], fx.ds.train[5], fx.ds.train[6], fx.ds.train[7]};
    const Normalizer norm = fit_normalizer(five);
    NetConfig net = fx.net;
    net.base_channels = 8;
    net.time_embed_dim = 8;
    net.cond_embed_dim = 16;

    const auto data = normalize_samples(five, norm);
    const std::vector<std::size_t> all{0, 1, 2, 3, 4};
    Rng eval_rng = make_rng(7, 0);
    std::vector<TrainingBatch> eval;
    for (int i = 0; i < 8; ++i) eval.push_back(make_training_batch(data, all, fx.sched, 0.0, eval_rng));
    const auto tau0_loss = [&](const DenoiserParams& p) {
        double s = 0.0;
        for (const auto& b : eval) s += denoiser_loss(net, p, b.input, b.target, nullptr, {}).tau0;
        return s / static_cast<double>(eval.size());
    };

    TrainConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 5;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 2000;
    cfg.cond_dropout_p = 0.0;
    cfg.dynamic_loss_weight = 0.0;
    Rng rng = make_rng(8, 0);
    const DenoiserParams start = init_params(net, rng);
    const double initial = tau0_loss(start);
    const TrainResult r = train(five, norm, net, cfg, fx.sched, nullptr, start, rng);
    const double final_loss = tau0_loss(r.params);
    EXPECT_LT(final_loss, 0.01 * initial) << "initial " << initial << " final " << final_loss;
}

TEST(Train, RejectsMismatchedSamples)
{
    Fixture fx(1);
    NetConfig other = fx.net;
    other.horizon = 16;
    TrainConfig cfg;
    Rng rng = make_rng(9, 0);
    EXPECT_THROW(train(fx.ds.train, fx.ds.manifest.normalizer, other, cfg, fx.sched, nullptr, {}, rng), Error);
    EXPECT_THROW(train({}, fx.ds.manifest.normalizer, fx.net, cfg, fx.sched, nullptr, {}, rng), Error);
}

TEST(NormalizedDynamics, ConjugatesTheMap)
{
    Normalizer n{Vec::Constant(3, 1.0), Vec::Constant(3, 4.0)};
    const auto g = normalized_dynamics([](const Vec& x) { return Vec(2.0 * x); }, n);
    const Vec u = Vec::Constant(3, 0.5);
    EXPECT_LT((g(u) - n.normalize(2.0 * n.denormalize(u))).norm(), 1e-15);
}
