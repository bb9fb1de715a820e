#pragma once

#include "trackdiff/dataset.hpp"

#include <filesystem>

namespace trackdiff {

struct TrainConfig {
    double learning_rate = 2e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 64;
    int epochs = 10;
    /// Minibatches per epoch; 0 means one pass over the shuffled samples.
    int steps_per_epoch = 0;
    double cond_dropout_p = 0.25;
    double dynamic_loss_weight = 1.0;
    bool dynamic_all_slots = false;
    double grad_clip = 1.0; // global L2 norm; 0 disables clipping

    void validate() const;
};

/// Normalises every real slot and the condition window of each sample.
std::vector<Sample> normalize_samples(const std::vector<Sample>& samples, const Normalizer& norm);

/// Dynamics map expressed in normalised coordinates.
StateMap normalized_dynamics(std::function<Vec(const Vec&)> f, const Normalizer& norm);

struct TrainingBatch {
    DenoiserInput input;
    Mat target; // clean tau_0, (n_x, B * H)
};

/// Draws k, eps and the null-condition flags for the selected (normalised)
/// samples, noises the trajectories with q_sample and clamps the observed
/// measurement slots to their clean values as done at inference.
TrainingBatch make_training_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                                  const DiffusionSchedule& sched, double cond_dropout_p, Rng& rng);

class AdamOptimizer {
public:
    AdamOptimizer(const DenoiserParams& params, const TrainConfig& cfg);

    /// Clips the gradients in place, then applies one update. Returns the
    /// pre-clip global gradient norm.
    double step(DenoiserParams& params, std::vector<Mat>& grads);

private:
    TrainConfig cfg_;
    std::vector<Mat> m_, v_;
    long t_ = 0;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<double> loss_history; // mean total loss per epoch
};

struct TrainOptions {
    /// Written after every epoch when non-empty.
    std::filesystem::path checkpoint_path;
    std::function<void(int epoch, double loss)> on_epoch;
};

/// Adam over shuffled minibatches of `samples` (physical units; normalised
/// here with `norm`). `f` is the physical state map used by the dynamics
/// term; pass an empty function to drop it.
TrainResult train(const std::vector<Sample>& samples, const Normalizer& norm, const NetConfig& net,
                  const TrainConfig& cfg, const DiffusionSchedule& sched, std::function<Vec(const Vec&)> f,
                  DenoiserParams initial, Rng& rng, const TrainOptions& opts = {});

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& history);

} // namespace trackdiff
