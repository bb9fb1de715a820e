#include "trackdiff/train.hpp"

#include "trackdiff/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace trackdiff {

void TrainConfig::validate() const
{
    // A zero learning rate is allowed so that the update path can be checked
    // to leave parameters untouched.
    if (!(learning_rate >= 0.0)) throw Error("train: learning_rate must be non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw Error("train: Adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw Error("train: adam_eps must be positive");
    if (batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (epochs < 0 || steps_per_epoch < 0) throw Error("train: epochs and steps_per_epoch must be >= 0");
    if (!(cond_dropout_p >= 0.0 && cond_dropout_p <= 1.0)) throw Error("train: cond_dropout_p outside [0, 1]");
    if (!(dynamic_loss_weight >= 0.0)) throw Error("train: dynamic_loss_weight must be non-negative");
    if (!(grad_clip >= 0.0)) throw Error("train: grad_clip must be non-negative");
}

std::vector<Sample> normalize_samples(const std::vector<Sample>& samples, const Normalizer& norm)
{
    std::vector<Sample> out = samples;
    for (Sample& s : out) {
        for (Eigen::Index l = 0; l < s.tau0.horizon(); ++l)
            if (s.tau0.mask[l] != 0.0) s.tau0.slots.row(l) = norm.normalize(s.tau0.slots.row(l).transpose()).transpose();
        for (Eigen::Index l = 0; l < s.cond.rows(); ++l)
            s.cond.row(l) = norm.normalize(s.cond.row(l).transpose()).transpose();
    }
    return out;
}

StateMap normalized_dynamics(std::function<Vec(const Vec&)> f, const Normalizer& norm)
{
    return [f = std::move(f), norm](const Vec& u) { return norm.normalize(f(norm.denormalize(u))); };
}

TrainingBatch make_training_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                                  const DiffusionSchedule& sched, double cond_dropout_p, Rng& rng)
{
    if (indices.empty()) throw Error("train: empty batch");
    const Sample& first = samples.at(indices.front());
    const Eigen::Index h = first.tau0.horizon();
    const Eigen::Index n_x = first.tau0.slots.cols();
    const auto b = static_cast<Eigen::Index>(indices.size());

    TrainingBatch batch;
    DenoiserInput& in = batch.input;
    in.tau.resize(n_x, b * h);
    in.mask.resize(1, b * h);
    in.cond.resize(first.cond.size(), b);
    in.k.resize(indices.size());
    in.null_cond.resize(indices.size());
    batch.target.resize(n_x, b * h);

    for (Eigen::Index i = 0; i < b; ++i) {
        const Sample& s = samples.at(indices[static_cast<std::size_t>(i)]);
        if (s.tau0.horizon() != h || s.tau0.slots.cols() != n_x || s.cond.size() != first.cond.size())
            throw Error("shape mismatch: samples in a batch differ");
        const int k = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(sched.steps)));
        Mat eps(h, n_x);
        for (Eigen::Index r = 0; r < h; ++r)
            for (Eigen::Index c = 0; c < n_x; ++c) eps(r, c) = standard_normal(rng);
        const bool null_cond = uniform01(rng) < cond_dropout_p;

        DiffusionTrajectory tk = q_sample(s.tau0, k, eps, sched);
        for (Eigen::Index l = 0; l < h - 1; ++l)
            if (s.tau0.mask[l] != 0.0) tk.slots.row(l) = s.tau0.slots.row(l);

        in.tau.middleCols(i * h, h) = tk.slots.transpose();
        in.mask.middleCols(i * h, h) = s.tau0.mask.transpose();
        in.cond.col(i) = s.cond.transpose().reshaped(s.cond.size(), 1);
        in.k[static_cast<std::size_t>(i)] = k;
        in.null_cond[static_cast<std::size_t>(i)] = null_cond;
        batch.target.middleCols(i * h, h) = s.tau0.slots.transpose();
    }
    return batch;
}

AdamOptimizer::AdamOptimizer(const DenoiserParams& params, const TrainConfig& cfg) : cfg_(cfg)
{
    for (const NamedTensor& t : params.tensors()) {
        m_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
        v_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
    }
}

double AdamOptimizer::step(DenoiserParams& params, std::vector<Mat>& grads)
{
    if (grads.size() != m_.size()) throw Error("train: gradient count mismatch");
    double sq = 0.0;
    for (const Mat& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw Error("training diverged");
    if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip)
        for (Mat& g : grads) g *= cfg_.grad_clip / norm;

    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    auto& tensors = params.tensors();
    for (std::size_t i = 0; i < grads.size(); ++i) {
        m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * grads[i];
        v_[i] = cfg_.adam_beta2 * v_[i] + (1.0 - cfg_.adam_beta2) * grads[i].cwiseAbs2();
        tensors[i].value.array() -=
            cfg_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.adam_eps);
    }
    return norm;
}

TrainResult train(const std::vector<Sample>& samples, const Normalizer& norm, const NetConfig& net,
                  const TrainConfig& cfg, const DiffusionSchedule& sched, std::function<Vec(const Vec&)> f,
                  DenoiserParams initial, Rng& rng, const TrainOptions& opts)
{
    cfg.validate();
    net.validate();
    if (samples.empty()) throw Error("train: empty dataset");
    const Sample& s0 = samples.front();
    if (s0.tau0.horizon() != net.horizon || s0.tau0.slots.cols() != net.width
        || s0.cond.rows() != net.cond_length || s0.cond.cols() != net.cond_width)
        throw Error("shape mismatch: samples do not match the network config");

    const std::vector<Sample> data = normalize_samples(samples, norm);
    const StateMap dynamics = f ? normalized_dynamics(std::move(f), norm) : StateMap{};
    LossOptions loss_opts;
    loss_opts.dynamic_loss_weight = cfg.dynamic_loss_weight;
    loss_opts.dynamic_all_slots = cfg.dynamic_all_slots;

    TrainResult result;
    result.params = initial.size() == 0 ? init_params(net, rng) : std::move(initial);
    AdamOptimizer adam(result.params, cfg);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    const int steps = cfg.steps_per_epoch > 0
                          ? cfg.steps_per_epoch
                          : static_cast<int>((data.size() + batch_size - 1) / batch_size);

    std::vector<Mat> grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0;
        for (int step = 0; step < steps; ++step) {
            std::vector<std::size_t> idx;
            idx.reserve(batch_size);
            while (idx.size() < std::min(batch_size, data.size())) {
                if (cursor == order.size()) {
                    shuffle_in_place(order, rng);
                    cursor = 0;
                }
                idx.push_back(order[cursor++]);
            }
            const TrainingBatch batch = make_training_batch(data, idx, sched, cfg.cond_dropout_p, rng);
            const LossTerms terms =
                denoiser_loss(net, result.params, batch.input, batch.target, dynamics, loss_opts, &grads);
            adam.step(result.params, grads);
            total += terms.total;
        }
        const double mean = total / static_cast<double>(steps);
        result.loss_history.push_back(mean);
        if (!result.params.all_finite()) throw Error("training diverged");
        if (!opts.checkpoint_path.empty())
            save_checkpoint(opts.checkpoint_path, TrackDiffuserModel{net, result.params, norm, sched.steps, sched.kind});
        if (opts.on_epoch) opts.on_epoch(epoch + 1, mean);
    }
    return result;
}

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& history)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.precision(17);
    for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << ' ' << history[i] << '\n';
    if (!out) throw Error("cannot write '" + path.string() + "'");
}

} // namespace trackdiff
