#pragma once

#include "trackdiff/autodiff.hpp"

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>

namespace trackdiff {

/// Shape of the temporal U-Net that predicts the clean trajectory tau_0.
struct NetConfig {
    int horizon = 40;           // H, slots per trajectory
    int width = 3;              // state dimension n_x
    int cond_width = 3;         // measurement dimension n_z
    int cond_length = 5;        // L, measurements in the condition window
    int base_channels = 32;
    std::vector<int> channel_multipliers{1, 2, 4};
    int kernel_size = 5;
    int time_embed_dim = 32;
    int cond_embed_dim = 32;
    int groups = 8;             // upper bound for group normalisation

    void validate() const;
    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int input_channels() const { return width + 1; } // trajectory + mask channel
};

struct NamedTensor {
    std::string name;
    Mat value;
};

/// All learnable weights, in a fixed order determined by NetConfig.
class DenoiserParams {
public:
    DenoiserParams() = default;
    explicit DenoiserParams(std::vector<NamedTensor> tensors);

    const std::vector<NamedTensor>& tensors() const { return tensors_; }
    std::vector<NamedTensor>& tensors() { return tensors_; }
    std::size_t size() const { return tensors_.size(); }
    std::size_t index_of(const std::string& name) const;
    const Mat& at(const std::string& name) const { return tensors_[index_of(name)].value; }
    std::size_t scalar_count() const;
    bool all_finite() const;

    bool operator==(const DenoiserParams& other) const;

private:
    std::vector<NamedTensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Parameter names and shapes for a configuration, in storage order.
struct ParamShape {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index fan_in = 0; // 0 marks normalisation/token parameters
    enum class Init { uniform_fan_in, ones, zeros } init = Init::uniform_fan_in;
};
std::vector<ParamShape> param_layout(const NetConfig& cfg);

std::size_t parameter_count(const NetConfig& cfg);

DenoiserParams init_params(const NetConfig& cfg, Rng& rng);

/// A batch of noised trajectories in normalised units.
struct DenoiserInput {
    Mat tau;                     // (n_x, B * H)
    Mat mask;                    // (1, B * H), 1 for real slots
    Mat cond;                    // (L * n_z, B), window flattened time-major
    std::vector<int> k;          // diffusion step per sample, in [1, K]
    std::vector<bool> null_cond; // substitute the learned null token

    Eigen::Index batch() const { return cond.cols(); }
};

/// Builds the network graph on `tape` and returns the (n_x, B * H) output.
nn::Tape::Var build_denoiser(nn::Tape& tape, const NetConfig& cfg, const DenoiserParams& params,
                             const DenoiserInput& input);

/// Inference-only forward pass: predicted tau_0, (n_x, B * H).
Mat denoiser_forward(const NetConfig& cfg, const DenoiserParams& params, const DenoiserInput& input);

/// Anything that maps a noised batch to a tau_0 prediction. The trained
/// network is one implementation; tests substitute stubs.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Mat predict(const DenoiserInput& input) const = 0;
};

class NetworkDenoiser : public Denoiser {
public:
    NetworkDenoiser(NetConfig cfg, DenoiserParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {}
    Mat predict(const DenoiserInput& input) const override { return denoiser_forward(cfg_, params_, input); }

    const NetConfig& config() const { return cfg_; }
    const DenoiserParams& params() const { return params_; }

private:
    NetConfig cfg_;
    DenoiserParams params_;
};

// ---------------------------------------------------------------------------
// Training objective
// ---------------------------------------------------------------------------

/// Normalised-space state map used by the dynamics-consistency term.
using StateMap = std::function<Vec(const Vec&)>;

struct LossOptions {
    double dynamic_loss_weight = 1.0;
    /// Apply the state map to every real slot instead of only the state slot.
    bool dynamic_all_slots = false;
    double jacobian_step = 1e-6;
};

struct LossTerms {
    double total = 0.0;
    double tau0 = 0.0;
    double dynamic = 0.0;
};

/// Total = L_tau0 + w * L_dynamic on one batch. `target` is the clean tau_0
/// (n_x, B * H). When `grads` is given it receives d(total)/d(param) in
/// parameter order. A null `dynamics` drops the dynamics term.
LossTerms denoiser_loss(const NetConfig& cfg, const DenoiserParams& params, const DenoiserInput& input,
                        const Mat& target, const StateMap& dynamics, const LossOptions& opts,
                        std::vector<Mat>* grads = nullptr);

/// Same objective for an arbitrary prediction (no gradients); used to check
/// the loss definition against stubbed models.
LossTerms loss_from_prediction(const NetConfig& cfg, const Mat& prediction, const DenoiserInput& input,
                               const Mat& target, const StateMap& dynamics, const LossOptions& opts);

} // namespace trackdiff
