#include "trackdiff/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace trackdiff {

using nn::Tape;

namespace {

int group_count(int channels, int max_groups)
{
    for (int g = std::min(channels, max_groups); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

int level_channels(const NetConfig& cfg, int level) { return cfg.base_channels * cfg.channel_multipliers[level]; }

// -- layout -----------------------------------------------------------------

struct LayoutBuilder {
    std::vector<ParamShape> out;

    void linear(const std::string& name, int in, int outd)
    {
        out.push_back({name + ".weight", outd, in, in, ParamShape::Init::uniform_fan_in});
        out.push_back({name + ".bias", outd, 1, in, ParamShape::Init::uniform_fan_in});
    }
    void conv(const std::string& name, int in, int outd, int kernel)
    {
        out.push_back({name + ".weight", outd, static_cast<Eigen::Index>(in) * kernel,
                       static_cast<Eigen::Index>(in) * kernel, ParamShape::Init::uniform_fan_in});
        out.push_back({name + ".bias", outd, 1, static_cast<Eigen::Index>(in) * kernel,
                       ParamShape::Init::uniform_fan_in});
    }
    void norm(const std::string& name, int ch)
    {
        out.push_back({name + ".gamma", ch, 1, 0, ParamShape::Init::ones});
        out.push_back({name + ".beta", ch, 1, 0, ParamShape::Init::zeros});
    }
    void block(const std::string& name, int in, int outd, int kernel)
    {
        conv(name + ".conv", in, outd, kernel);
        norm(name + ".norm", outd);
    }
    void residual(const std::string& name, int in, int outd, int emb, int kernel)
    {
        block(name + ".block0", in, outd, kernel);
        block(name + ".block1", outd, outd, kernel);
        linear(name + ".emb", emb, outd);
        if (in != outd) conv(name + ".skip", in, outd, 1);
    }
};

// -- graph ------------------------------------------------------------------

struct GraphBuilder {
    Tape& tape;
    const NetConfig& cfg;
    const DenoiserParams& params;

    Tape::Var p(const std::string& name) { return tape.param(params.at(name), params.index_of(name)); }

    Tape::Var linear(const std::string& name, Tape::Var x)
    {
        return tape.conv1d(x, p(name + ".weight"), p(name + ".bias"), 1, 1, 0);
    }
    Tape::Var conv(const std::string& name, Tape::Var x, int kernel, int stride, int pad)
    {
        return tape.conv1d(x, p(name + ".weight"), p(name + ".bias"), kernel, stride, pad);
    }
    Tape::Var block(const std::string& name, Tape::Var x)
    {
        const int k = cfg.kernel_size;
        Tape::Var h = conv(name + ".conv", x, k, 1, k / 2);
        const int ch = static_cast<int>(tape.value(h).rows());
        h = tape.group_norm(h, p(name + ".norm.gamma"), p(name + ".norm.beta"), group_count(ch, cfg.groups));
        return tape.mish(h);
    }
    Tape::Var residual(const std::string& name, Tape::Var x, Tape::Var emb, bool project)
    {
        Tape::Var h = block(name + ".block0", x);
        h = tape.add_per_sample(h, linear(name + ".emb", emb));
        h = block(name + ".block1", h);
        Tape::Var skip = project ? conv(name + ".skip", x, 1, 1, 0) : x;
        return tape.add(h, skip);
    }
};

Mat sinusoidal_embedding(const std::vector<int>& steps, int dim)
{
    const int half = dim / 2;
    Mat e = Mat::Zero(dim, static_cast<Eigen::Index>(steps.size()));
    const double scale = half > 1 ? std::log(10000.0) / static_cast<double>(half - 1) : 0.0;
    for (std::size_t s = 0; s < steps.size(); ++s) {
        for (int i = 0; i < half; ++i) {
            const double arg = static_cast<double>(steps[s]) * std::exp(-scale * i);
            e(i, static_cast<Eigen::Index>(s)) = std::sin(arg);
            e(half + i, static_cast<Eigen::Index>(s)) = std::cos(arg);
        }
    }
    return e;
}

void check_input(const NetConfig& cfg, const DenoiserInput& in)
{
    const Eigen::Index b = in.batch();
    if (b < 1) throw Error("shape mismatch: empty batch");
    if (in.tau.rows() != cfg.width || in.tau.cols() != b * cfg.horizon)
        throw Error("shape mismatch: trajectory must be width x (batch * horizon)");
    if (in.mask.rows() != 1 || in.mask.cols() != in.tau.cols()) throw Error("shape mismatch: mask");
    if (in.cond.rows() != static_cast<Eigen::Index>(cfg.cond_length) * cfg.cond_width)
        throw Error("shape mismatch: condition window");
    if (static_cast<Eigen::Index>(in.k.size()) != b || static_cast<Eigen::Index>(in.null_cond.size()) != b)
        throw Error("shape mismatch: per-sample step or condition flags");
}

} // namespace

// ---------------------------------------------------------------------------

void NetConfig::validate() const
{
    if (cond_length < 1 || horizon < cond_length) throw Error("net config: need horizon >= cond_length >= 1");
    if (base_channels < 4) throw Error("net config: base_channels must be >= 4");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw Error("net config: kernel_size must be odd");
    if (width < 1 || cond_width < 1) throw Error("net config: widths must be positive");
    if (channel_multipliers.empty()) throw Error("net config: need at least one channel multiplier");
    for (int m : channel_multipliers)
        if (m < 1) throw Error("net config: channel multipliers must be positive");
    if (horizon % (1 << (levels() - 1)) != 0)
        throw Error("net config: horizon must be divisible by 2^(levels - 1)");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw Error("net config: time_embed_dim must be even");
    if (cond_embed_dim < 1) throw Error("net config: cond_embed_dim must be positive");
    if (groups < 1) throw Error("net config: groups must be positive");
}

DenoiserParams::DenoiserParams(std::vector<NamedTensor> tensors) : tensors_(std::move(tensors))
{
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (!index_.emplace(tensors_[i].name, i).second) throw Error("duplicate parameter '" + tensors_[i].name + "'");
    }
}

std::size_t DenoiserParams::index_of(const std::string& name) const
{
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("missing parameter '" + name + "'");
    return it->second;
}

std::size_t DenoiserParams::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

bool DenoiserParams::all_finite() const
{
    for (const auto& t : tensors_)
        if (!t.value.allFinite()) return false;
    return true;
}

bool DenoiserParams::operator==(const DenoiserParams& other) const
{
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        const auto& a = tensors_[i];
        const auto& b = other.tensors_[i];
        if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
        if (std::memcmp(a.value.data(), b.value.data(), sizeof(double) * static_cast<std::size_t>(a.value.size())) != 0)
            return false;
    }
    return true;
}

std::vector<ParamShape> param_layout(const NetConfig& cfg)
{
    cfg.validate();
    LayoutBuilder b;
    const int dt = cfg.time_embed_dim, dc = cfg.cond_embed_dim, emb = dt + dc;
    b.linear("time.fc1", dt, 4 * dt);
    b.linear("time.fc2", 4 * dt, dt);
    b.linear("cond.fc1", cfg.cond_length * cfg.cond_width, 4 * dc);
    b.linear("cond.fc2", 4 * dc, dc);
    b.out.push_back({"cond.null", dc, 1, 0, ParamShape::Init::zeros});

    const int levels = cfg.levels();
    int in = cfg.input_channels();
    for (int i = 0; i < levels; ++i) {
        const int out = level_channels(cfg, i);
        const std::string n = "down" + std::to_string(i);
        b.residual(n + ".res0", in, out, emb, cfg.kernel_size);
        b.residual(n + ".res1", out, out, emb, cfg.kernel_size);
        if (i < levels - 1) b.conv(n + ".down", out, out, 3);
        in = out;
    }
    b.residual("mid.res0", in, in, emb, cfg.kernel_size);
    b.residual("mid.res1", in, in, emb, cfg.kernel_size);
    for (int j = 0; j < levels - 1; ++j) {
        const int i = levels - 1 - j;
        const int hi = level_channels(cfg, i), lo = level_channels(cfg, i - 1);
        const std::string n = "up" + std::to_string(j);
        b.residual(n + ".res0", 2 * hi, lo, emb, cfg.kernel_size);
        b.residual(n + ".res1", lo, lo, emb, cfg.kernel_size);
        b.conv(n + ".up", lo, lo, 3);
    }
    const int top = level_channels(cfg, 0);
    b.block("final.block", top, top, cfg.kernel_size);
    b.conv("final.out", top, cfg.width, 1);
    return b.out;
}

std::size_t parameter_count(const NetConfig& cfg)
{
    std::size_t n = 0;
    for (const auto& s : param_layout(cfg)) n += static_cast<std::size_t>(s.rows * s.cols);
    return n;
}

DenoiserParams init_params(const NetConfig& cfg, Rng& rng)
{
    std::vector<NamedTensor> tensors;
    for (const auto& s : param_layout(cfg)) {
        Mat v(s.rows, s.cols);
        switch (s.init) {
        case ParamShape::Init::ones: v.setOnes(); break;
        case ParamShape::Init::zeros: v.setZero(); break;
        case ParamShape::Init::uniform_fan_in: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
            for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
            break;
        }
        }
        tensors.push_back({s.name, std::move(v)});
    }
    return DenoiserParams(std::move(tensors));
}

Tape::Var build_denoiser(Tape& tape, const NetConfig& cfg, const DenoiserParams& params, const DenoiserInput& input)
{
    check_input(cfg, input);
    GraphBuilder g{tape, cfg, params};
    const Eigen::Index batch = input.batch();

    // Embeddings: time step and (possibly null) condition.
    Tape::Var t = tape.input(sinusoidal_embedding(input.k, cfg.time_embed_dim), batch, 1);
    t = g.linear("time.fc2", tape.mish(g.linear("time.fc1", t)));
    Tape::Var c = tape.input(input.cond, batch, 1);
    c = g.linear("cond.fc2", tape.mish(g.linear("cond.fc1", c)));
    c = tape.select_columns(c, g.p("cond.null"), input.null_cond);
    const Tape::Var emb = tape.mish(tape.concat(t, c));

    Mat x0(cfg.input_channels(), input.tau.cols());
    x0.topRows(cfg.width) = input.tau;
    x0.bottomRows(1) = input.mask;
    Tape::Var x = tape.input(std::move(x0), batch, cfg.horizon);

    const int levels = cfg.levels();
    std::vector<Tape::Var> skips;
    int in = cfg.input_channels();
    for (int i = 0; i < levels; ++i) {
        const int out = level_channels(cfg, i);
        const std::string n = "down" + std::to_string(i);
        x = g.residual(n + ".res0", x, emb, in != out);
        x = g.residual(n + ".res1", x, emb, false);
        skips.push_back(x);
        if (i < levels - 1) x = g.conv(n + ".down", x, 3, 2, 1);
        in = out;
    }
    x = g.residual("mid.res0", x, emb, false);
    x = g.residual("mid.res1", x, emb, false);
    for (int j = 0; j < levels - 1; ++j) {
        const int i = levels - 1 - j;
        const std::string n = "up" + std::to_string(j);
        x = tape.concat(x, skips[static_cast<std::size_t>(i)]);
        x = g.residual(n + ".res0", x, emb, true);
        x = g.residual(n + ".res1", x, emb, false);
        x = g.conv(n + ".up", tape.upsample2(x), 3, 1, 1);
    }
    x = g.block("final.block", x);
    return g.conv("final.out", x, 1, 1, 0);
}

Mat denoiser_forward(const NetConfig& cfg, const DenoiserParams& params, const DenoiserInput& input)
{
    Tape tape(params.size(), false);
    const Tape::Var out = build_denoiser(tape, cfg, params, input);
    return tape.value(out);
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

namespace {

std::vector<Eigen::Index> dynamic_columns(const NetConfig& cfg, const DenoiserInput& input, bool all_slots)
{
    std::vector<Eigen::Index> cols;
    const Eigen::Index h = cfg.horizon;
    for (Eigen::Index b = 0; b < input.batch(); ++b) {
        if (all_slots) {
            for (Eigen::Index l = 0; l < h; ++l)
                if (input.mask(0, b * h + l) != 0.0) cols.push_back(b * h + l);
        } else {
            cols.push_back(b * h + h - 1);
        }
    }
    return cols;
}

Mat map_columns(const Mat& m, const std::vector<Eigen::Index>& cols, const StateMap& f)
{
    Mat out;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const Vec y = f(m.col(cols[i]));
        if (i == 0) out.resize(y.size(), static_cast<Eigen::Index>(cols.size()));
        out.col(static_cast<Eigen::Index>(i)) = y;
    }
    return out;
}

void check_finite(const LossTerms& l)
{
    if (!std::isfinite(l.total) || !std::isfinite(l.tau0) || !std::isfinite(l.dynamic))
        throw Error("training diverged");
}

} // namespace

LossTerms denoiser_loss(const NetConfig& cfg, const DenoiserParams& params, const DenoiserInput& input,
                        const Mat& target, const StateMap& dynamics, const LossOptions& opts, std::vector<Mat>* grads)
{
    Tape tape(params.size(), grads != nullptr);
    const Tape::Var pred = build_denoiser(tape, cfg, params, input);
    const Vec weights = input.mask.row(0).transpose();
    Tape::Var total = tape.weighted_mse(pred, target, weights);
    LossTerms terms;
    terms.tau0 = tape.value(total)(0, 0);
    if (dynamics) {
        const auto cols = dynamic_columns(cfg, input, opts.dynamic_all_slots);
        const Mat target_out = map_columns(target, cols, dynamics);
        const Tape::Var dyn = tape.mapped_mse(pred, cols, dynamics, target_out, opts.jacobian_step);
        terms.dynamic = tape.value(dyn)(0, 0);
        total = tape.add(total, tape.scale(dyn, opts.dynamic_loss_weight));
    }
    terms.total = tape.value(total)(0, 0);
    check_finite(terms);

    if (grads) {
        tape.backward(total);
        grads->resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Mat& g = tape.param_grad(i);
            const Mat& v = params.tensors()[i].value;
            (*grads)[i] = g.size() == 0 ? Mat::Zero(v.rows(), v.cols()) : g;
        }
    }
    return terms;
}

LossTerms loss_from_prediction(const NetConfig& cfg, const Mat& prediction, const DenoiserInput& input,
                               const Mat& target, const StateMap& dynamics, const LossOptions& opts)
{
    const Vec w = input.mask.row(0).transpose();
    LossTerms terms;
    terms.tau0 = ((prediction - target).array().square().rowwise() * w.transpose().array()).sum()
                 / (static_cast<double>(prediction.rows()) * w.sum());
    if (dynamics) {
        const auto cols = dynamic_columns(cfg, input, opts.dynamic_all_slots);
        const Mat a = map_columns(prediction, cols, dynamics);
        const Mat b = map_columns(target, cols, dynamics);
        terms.dynamic = (a - b).squaredNorm() / static_cast<double>(a.size());
    }
    terms.total = terms.tau0 + opts.dynamic_loss_weight * terms.dynamic;
    check_finite(terms);
    return terms;
}

} // namespace trackdiff
