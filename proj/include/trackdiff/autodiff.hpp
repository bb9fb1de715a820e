#pragma once

#include "trackdiff/common.hpp"

#include <functional>

namespace trackdiff::nn {

/// Reverse-mode differentiation over a fixed operator set for 1-D temporal
/// convolution networks.
///
/// Every value is a matrix whose rows are channels and whose columns are
/// (sample, time) positions laid out sample-major: column b * length + l.
/// Vectors per sample (embeddings) use length 1. Parameters are referenced,
/// not copied; their gradients are read back through `param_grad`.
class Tape {
public:
    struct Var {
        int id = -1;
    };

    /// `param_count` sizes the table of parameter gradients.
    explicit Tape(std::size_t param_count = 0, bool record = true);

    Var input(Mat value, Eigen::Index batch, Eigen::Index length);
    Var param(const Mat& value, std::size_t index);

    const Mat& value(Var v) const;
    Eigen::Index batch(Var v) const { return nodes_[v.id].batch; }
    Eigen::Index length(Var v) const { return nodes_[v.id].length; }

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs the backward pass.
    void backward(Var out);

    /// Gradient for parameter `index`; empty if the parameter was not used.
    const Mat& param_grad(std::size_t index) const { return param_grads_[index]; }
    /// Gradient of an input node after backward().
    const Mat& grad(Var v) const { return nodes_[v.id].grad; }

    // -- operators ---------------------------------------------------------

    /// 1-D convolution. weight: (out, in * kernel) with the kernel offset as
    /// the slow index; bias: (out, 1). Zero padding on both sides.
    Var conv1d(Var x, Var weight, Var bias, int kernel, int stride, int pad);
    /// Nearest-neighbour upsampling by two along time.
    Var upsample2(Var x);
    /// Group normalisation over (channels in group, time) per sample.
    Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);
    /// x * tanh(softplus(x)).
    Var mish(Var x);
    Var add(Var a, Var b);
    Var scale(Var a, double s);
    /// x (C, B*L) + e (C, B) broadcast along time.
    Var add_per_sample(Var x, Var e);
    /// Stack along channels; both operands share the column layout.
    Var concat(Var a, Var b);
    /// Per-sample choice between a row of embeddings and a single learned
    /// vector: out.col(b) = use_alt[b] ? alt : x.col(b).
    Var select_columns(Var x, Var alt, const std::vector<bool>& use_alt);
    /// Mean of squared differences weighted per column:
    /// sum_c,j w_j (a - b)^2 / (rows * sum_j w_j). Gradient flows to `a` only.
    Var weighted_mse(Var a, const Mat& target, const Vec& column_weights);
    /// Maps selected columns of `x` through a user function g (rows -> rows)
    /// and returns the mean squared difference to `target_out`
    /// (rows x selected). The Jacobian of g is taken by central differences.
    Var mapped_mse(Var x, const std::vector<Eigen::Index>& columns, const std::function<Vec(const Vec&)>& g,
                   const Mat& target_out, double jacobian_step);

private:
    struct Node {
        Mat owned;
        const Mat* external = nullptr;
        Mat grad;
        Eigen::Index batch = 1;
        Eigen::Index length = 1;
        long param_index = -1;
        std::function<void()> backward;

        const Mat& value() const { return external ? *external : owned; }
    };

    Var push(Mat value, Eigen::Index batch, Eigen::Index length);
    Mat& grad_ref(int id);

    std::vector<Node> nodes_;
    std::vector<Mat> param_grads_;
    bool record_;
};

} // namespace trackdiff::nn
