#include "trackdiff/autodiff.hpp"

#include <cmath>

namespace trackdiff::nn {

namespace {

void require(bool ok, const char* what)
{
    if (!ok) throw Error(std::string("shape mismatch: ") + what);
}

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

} // namespace

Tape::Tape(std::size_t param_count, bool record) : param_grads_(param_count), record_(record)
{
    nodes_.reserve(256);
}

Tape::Var Tape::push(Mat value, Eigen::Index batch, Eigen::Index length)
{
    Node n;
    n.owned = std::move(value);
    n.batch = batch;
    n.length = length;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Tape::Var Tape::input(Mat value, Eigen::Index batch, Eigen::Index length)
{
    require(value.cols() == batch * length, "input columns != batch * length");
    return push(std::move(value), batch, length);
}

Tape::Var Tape::param(const Mat& value, std::size_t index)
{
    require(index < param_grads_.size(), "parameter index out of range");
    Node n;
    n.external = &value;
    n.batch = 1;
    n.length = value.cols();
    n.param_index = static_cast<long>(index);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
}

const Mat& Tape::value(Var v) const { return nodes_[v.id].value(); }

Mat& Tape::grad_ref(int id)
{
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value().rows(), n.value().cols());
    return n.grad;
}

void Tape::backward(Var out)
{
    if (!record_) throw Error("backward on a tape that did not record");
    require(value(out).size() == 1, "backward requires a scalar output");
    grad_ref(out.id)(0, 0) = 1.0;
    for (int id = out.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) continue;
        if (n.backward) n.backward();
        if (n.param_index >= 0) {
            Mat& pg = param_grads_[static_cast<std::size_t>(n.param_index)];
            if (pg.size() == 0) pg = n.grad;
            else pg += n.grad;
        }
    }
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

Tape::Var Tape::conv1d(Var x, Var weight, Var bias, int kernel, int stride, int pad)
{
    const Mat& xv = value(x);
    const Mat& w = value(weight);
    const Mat& b = value(bias);
    const Eigen::Index cin = xv.rows(), batch_n = batch(x), len = length(x);
    require(w.cols() == cin * kernel, "conv weight columns != in_channels * kernel");
    require(b.rows() == w.rows() && b.cols() == 1, "conv bias shape");
    const Eigen::Index out_len = (len + 2 * pad - kernel) / stride + 1;
    require(out_len >= 1, "conv output length < 1");

    const bool pointwise = kernel == 1 && stride == 1 && pad == 0;
    Mat col;
    if (!pointwise) {
        col = Mat::Zero(cin * kernel, batch_n * out_len);
        for (Eigen::Index s = 0; s < batch_n; ++s) {
            for (Eigen::Index lo = 0; lo < out_len; ++lo) {
                const Eigen::Index j = s * out_len + lo;
                for (int k = 0; k < kernel; ++k) {
                    const Eigen::Index l = lo * stride + k - pad;
                    if (l < 0 || l >= len) continue;
                    col.block(k * cin, j, cin, 1) = xv.col(s * len + l);
                }
            }
        }
    }
    const Mat& src = pointwise ? xv : col;
    Mat out = w * src;
    out.colwise() += b.col(0);
    Var y = push(std::move(out), batch_n, out_len);
    if (!record_) return y;

    nodes_[y.id].backward = [this, x, weight, bias, y, kernel, stride, pad, cin, batch_n, len, out_len, pointwise,
                             col = std::move(col)]() {
        const Mat& gy = nodes_[y.id].grad;
        const Mat& xs = pointwise ? value(x) : col;
        grad_ref(weight.id).noalias() += gy * xs.transpose();
        grad_ref(bias.id) += gy.rowwise().sum();
        const Mat gcol = value(weight).transpose() * gy;
        Mat& gx = grad_ref(x.id);
        if (pointwise) {
            gx += gcol;
            return;
        }
        for (Eigen::Index s = 0; s < batch_n; ++s) {
            for (Eigen::Index lo = 0; lo < out_len; ++lo) {
                const Eigen::Index j = s * out_len + lo;
                for (int k = 0; k < kernel; ++k) {
                    const Eigen::Index l = lo * stride + k - pad;
                    if (l < 0 || l >= len) continue;
                    gx.col(s * len + l) += gcol.block(k * cin, j, cin, 1);
                }
            }
        }
    };
    return y;
}

Tape::Var Tape::upsample2(Var x)
{
    const Mat& xv = value(x);
    const Eigen::Index batch_n = batch(x), len = length(x);
    Mat out(xv.rows(), batch_n * len * 2);
    for (Eigen::Index s = 0; s < batch_n; ++s)
        for (Eigen::Index l = 0; l < len; ++l) {
            out.col(s * 2 * len + 2 * l) = xv.col(s * len + l);
            out.col(s * 2 * len + 2 * l + 1) = xv.col(s * len + l);
        }
    Var y = push(std::move(out), batch_n, 2 * len);
    if (!record_) return y;
    nodes_[y.id].backward = [this, x, y, batch_n, len]() {
        const Mat& gy = nodes_[y.id].grad;
        Mat& gx = grad_ref(x.id);
        for (Eigen::Index s = 0; s < batch_n; ++s)
            for (Eigen::Index l = 0; l < len; ++l)
                gx.col(s * len + l) += gy.col(s * 2 * len + 2 * l) + gy.col(s * 2 * len + 2 * l + 1);
    };
    return y;
}

Tape::Var Tape::group_norm(Var x, Var gamma, Var beta, int groups, double eps)
{
    const Mat& xv = value(x);
    const Eigen::Index ch = xv.rows(), batch_n = batch(x), len = length(x);
    require(groups >= 1 && ch % groups == 0, "group_norm channels not divisible by groups");
    require(value(gamma).rows() == ch && value(beta).rows() == ch, "group_norm affine shape");
    const Eigen::Index gsize = ch / groups;
    const double count = static_cast<double>(gsize * len);

    Mat xhat(ch, xv.cols());
    Vec inv_std(batch_n * groups);
    for (Eigen::Index s = 0; s < batch_n; ++s) {
        for (int g = 0; g < groups; ++g) {
            auto blk = xv.block(g * gsize, s * len, gsize, len);
            const double mean = blk.mean();
            const double var = (blk.array() - mean).square().sum() / count;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[s * groups + g] = is;
            xhat.block(g * gsize, s * len, gsize, len) = (blk.array() - mean) * is;
        }
    }
    Mat out = (xhat.array().colwise() * value(gamma).col(0).array()).matrix();
    out.colwise() += value(beta).col(0);
    Var y = push(std::move(out), batch_n, len);
    if (!record_) return y;

    nodes_[y.id].backward = [this, x, gamma, beta, y, groups, gsize, batch_n, len, count, xhat = std::move(xhat),
                             inv_std = std::move(inv_std)]() {
        const Mat& gy = nodes_[y.id].grad;
        grad_ref(gamma.id) += gy.cwiseProduct(xhat).rowwise().sum();
        grad_ref(beta.id) += gy.rowwise().sum();
        const Mat dxhat = (gy.array().colwise() * value(gamma).col(0).array()).matrix();
        Mat& gx = grad_ref(x.id);
        for (Eigen::Index s = 0; s < batch_n; ++s) {
            for (int g = 0; g < groups; ++g) {
                auto d = dxhat.block(g * gsize, s * len, gsize, len);
                auto h = xhat.block(g * gsize, s * len, gsize, len);
                const double sum_d = d.sum();
                const double sum_dh = d.cwiseProduct(h).sum();
                const double is = inv_std[s * groups + g];
                gx.block(g * gsize, s * len, gsize, len).array() +=
                    (is / count) * (count * d.array() - sum_d - h.array() * sum_dh);
            }
        }
    };
    return y;
}

Tape::Var Tape::mish(Var x)
{
    const Mat& xv = value(x);
    Mat out(xv.rows(), xv.cols());
    Mat deriv;
    if (record_) deriv.resize(xv.rows(), xv.cols());
    const Eigen::Index n = xv.size();
    const double* in = xv.data();
    double* o = out.data();
    double* d = record_ ? deriv.data() : nullptr;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = in[i];
        const double t = std::tanh(softplus(v));
        o[i] = v * t;
        if (d) {
            const double sig = 1.0 / (1.0 + std::exp(-v));
            d[i] = t + v * (1.0 - t * t) * sig;
        }
    }
    Var y = push(std::move(out), batch(x), length(x));
    if (!record_) return y;
    nodes_[y.id].backward = [this, x, y, deriv = std::move(deriv)]() {
        grad_ref(x.id) += nodes_[y.id].grad.cwiseProduct(deriv);
    };
    return y;
}

Tape::Var Tape::add(Var a, Var b)
{
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add operands differ");
    Var y = push(value(a) + value(b), batch(a), length(a));
    if (!record_) return y;
    nodes_[y.id].backward = [this, a, b, y]() {
        grad_ref(a.id) += nodes_[y.id].grad;
        grad_ref(b.id) += nodes_[y.id].grad;
    };
    return y;
}

Tape::Var Tape::scale(Var a, double s)
{
    Var y = push(value(a) * s, batch(a), length(a));
    if (!record_) return y;
    nodes_[y.id].backward = [this, a, y, s]() { grad_ref(a.id) += s * nodes_[y.id].grad; };
    return y;
}

Tape::Var Tape::add_per_sample(Var x, Var e)
{
    const Mat& xv = value(x);
    const Mat& ev = value(e);
    const Eigen::Index batch_n = batch(x), len = length(x);
    require(ev.rows() == xv.rows() && ev.cols() == batch_n, "add_per_sample embedding shape");
    Mat out = xv;
    for (Eigen::Index s = 0; s < batch_n; ++s) out.middleCols(s * len, len).colwise() += ev.col(s);
    Var y = push(std::move(out), batch_n, len);
    if (!record_) return y;
    nodes_[y.id].backward = [this, x, e, y, batch_n, len]() {
        const Mat& gy = nodes_[y.id].grad;
        grad_ref(x.id) += gy;
        Mat& ge = grad_ref(e.id);
        for (Eigen::Index s = 0; s < batch_n; ++s) ge.col(s) += gy.middleCols(s * len, len).rowwise().sum();
    };
    return y;
}

Tape::Var Tape::concat(Var a, Var b)
{
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.cols() == bv.cols(), "concat column counts differ");
    Mat out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    Var y = push(std::move(out), batch(a), length(a));
    if (!record_) return y;
    const Eigen::Index ra = av.rows(), rb = bv.rows();
    nodes_[y.id].backward = [this, a, b, y, ra, rb]() {
        const Mat& gy = nodes_[y.id].grad;
        grad_ref(a.id) += gy.topRows(ra);
        grad_ref(b.id) += gy.bottomRows(rb);
    };
    return y;
}

Tape::Var Tape::select_columns(Var x, Var alt, const std::vector<bool>& use_alt)
{
    const Mat& xv = value(x);
    const Mat& av = value(alt);
    require(av.rows() == xv.rows() && av.cols() == 1, "select_columns alternative shape");
    require(static_cast<Eigen::Index>(use_alt.size()) == xv.cols(), "select_columns mask length");
    Mat out = xv;
    for (Eigen::Index j = 0; j < xv.cols(); ++j)
        if (use_alt[static_cast<std::size_t>(j)]) out.col(j) = av.col(0);
    Var y = push(std::move(out), batch(x), length(x));
    if (!record_) return y;
    nodes_[y.id].backward = [this, x, alt, y, use_alt]() {
        const Mat& gy = nodes_[y.id].grad;
        Mat& gx = grad_ref(x.id);
        Mat& ga = grad_ref(alt.id);
        for (Eigen::Index j = 0; j < gy.cols(); ++j) {
            if (use_alt[static_cast<std::size_t>(j)]) ga.col(0) += gy.col(j);
            else gx.col(j) += gy.col(j);
        }
    };
    return y;
}

Tape::Var Tape::weighted_mse(Var a, const Mat& target, const Vec& column_weights)
{
    const Mat& av = value(a);
    require(target.rows() == av.rows() && target.cols() == av.cols(), "mse target shape");
    require(column_weights.size() == av.cols(), "mse weight length");
    const double denom = static_cast<double>(av.rows()) * column_weights.sum();
    require(denom > 0.0, "mse weights sum to zero");
    Mat diff = av - target;
    const double loss = (diff.array().square().rowwise() * column_weights.transpose().array()).sum() / denom;
    Var y = push(Mat::Constant(1, 1, loss), 1, 1);
    if (!record_) return y;
    nodes_[y.id].backward = [this, a, y, denom, column_weights, diff = std::move(diff)]() {
        const double g = nodes_[y.id].grad(0, 0);
        grad_ref(a.id) += ((2.0 * g / denom) * (diff.array().rowwise() * column_weights.transpose().array())).matrix();
    };
    return y;
}

Tape::Var Tape::mapped_mse(Var x, const std::vector<Eigen::Index>& columns, const std::function<Vec(const Vec&)>& g,
                           const Mat& target_out, double jacobian_step)
{
    const Mat& xv = value(x);
    require(static_cast<Eigen::Index>(columns.size()) == target_out.cols(), "mapped_mse target columns");
    const Eigen::Index n_out = target_out.rows();
    require(n_out > 0 && !columns.empty(), "mapped_mse empty selection");
    const double denom = static_cast<double>(n_out * target_out.cols());

    Mat resid(n_out, target_out.cols());
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const Vec out = g(xv.col(columns[i]));
        require(out.size() == n_out, "mapped_mse function output size");
        resid.col(static_cast<Eigen::Index>(i)) = out - target_out.col(static_cast<Eigen::Index>(i));
    }
    const double loss = resid.squaredNorm() / denom;
    Var y = push(Mat::Constant(1, 1, loss), 1, 1);
    if (!record_) return y;
    nodes_[y.id].backward = [this, x, y, columns, g, denom, jacobian_step, resid = std::move(resid)]() {
        const double gout = nodes_[y.id].grad(0, 0);
        const Mat& xs = value(x);
        Mat& gx = grad_ref(x.id);
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const Vec xc = xs.col(columns[i]);
            Vec probe = xc;
            for (Eigen::Index d = 0; d < xc.size(); ++d) {
                probe[d] = xc[d] + jacobian_step;
                const Vec hi = g(probe);
                probe[d] = xc[d] - jacobian_step;
                const Vec lo = g(probe);
                probe[d] = xc[d];
                const Vec dcol = (hi - lo) / (2.0 * jacobian_step);
                gx(d, columns[i]) += (2.0 * gout / denom) * dcol.dot(resid.col(static_cast<Eigen::Index>(i)));
            }
        }
    };
    return y;
}

} // namespace trackdiff::nn
