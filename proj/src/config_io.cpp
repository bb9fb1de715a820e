#include "trackdiff/config_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace trackdiff {

namespace {

void check_object(const Json& j, std::initializer_list<const char*> keys, const std::string& what)
{
    if (!j.is_object()) throw Error(what + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; });
        if (!known) throw Error(what + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& what)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(what + ": bad value for '" + key + "'");
    }
}

} // namespace

Json to_json(const Mat& m)
{
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const Json& j)
{
    if (!j.is_array()) throw Error("matrix: expected an array of rows");
    if (j.empty()) return Mat();
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Json& row = j.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw Error("matrix: ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!row.at(static_cast<std::size_t>(c)).is_number()) throw Error("matrix: non-numeric entry");
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

Json to_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vec_from_json(const Json& j)
{
    if (!j.is_array()) throw Error("vector: expected an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error("vector: non-numeric entry");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

std::string taylor_order_string(const std::optional<int>& order)
{
    return order ? std::to_string(*order) : "exact";
}

std::optional<int> taylor_order_from_string(const std::string& s)
{
    if (s == "exact") return std::nullopt;
    int v = 0;
    try {
        std::size_t used = 0;
        v = std::stoi(s, &used);
        if (used != s.size()) throw Error("invalid Taylor order");
    } catch (const std::logic_error&) {
        throw Error("invalid Taylor order");
    }
    if (v < 1) throw Error("invalid Taylor order");
    return v;
}

namespace {

std::optional<int> read_order(const Json& j, const char* key, std::optional<int> fallback)
{
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if (v.is_string()) return taylor_order_from_string(v.get<std::string>());
    if (v.is_number_integer()) return taylor_order_from_string(std::to_string(v.get<long>()));
    throw Error("invalid Taylor order");
}

Json order_json(const std::optional<int>& order) { return order ? Json(*order) : Json("exact"); }

} // namespace

// ---------------------------------------------------------------------------
// SSM
// ---------------------------------------------------------------------------

Json to_json(const NoiseSpec& n)
{
    Json j{{"kind", to_string(n.kind())}, {"cov1", to_json(n.cov1())}};
    if (n.kind() == NoiseKind::gaussian_mixture) {
        j["cov2"] = to_json(n.cov2());
        j["mix_weight"] = n.mix_weight();
    }
    return j;
}

NoiseSpec noise_from_json(const Json& j)
{
    check_object(j, {"kind", "cov1", "cov2", "mix_weight"}, "noise");
    std::string kind = "gaussian";
    read(j, "kind", kind, "noise");
    if (!j.contains("cov1")) throw Error("noise: missing cov1");
    const Mat cov1 = mat_from_json(j.at("cov1"));
    if (noise_kind_from_string(kind) == NoiseKind::gaussian) return NoiseSpec::gaussian(cov1);
    if (!j.contains("cov2")) throw Error("noise: missing cov2");
    double w = 0.8;
    read(j, "mix_weight", w, "noise");
    return NoiseSpec::mixture(cov1, mat_from_json(j.at("cov2")), w);
}

Json to_json(const TransitionSpec& t)
{
    Json j{{"kind", to_string(t.kind)}, {"delta", t.delta}, {"taylor_order", order_json(t.taylor_order)}};
    if (t.kind == TransitionKind::explicit_matrix) j["matrix"] = to_json(t.matrix);
    return j;
}

TransitionSpec transition_from_json(const Json& j)
{
    check_object(j, {"kind", "delta", "taylor_order", "matrix"}, "transition");
    TransitionSpec t;
    std::string kind = to_string(t.kind);
    read(j, "kind", kind, "transition");
    t.kind = transition_kind_from_string(kind);
    read(j, "delta", t.delta, "transition");
    t.taylor_order = read_order(j, "taylor_order", std::nullopt);
    if (j.contains("matrix")) t.matrix = mat_from_json(j.at("matrix"));
    return t;
}

Json to_json(const MeasurementSpec& m)
{
    Json j{{"kind", to_string(m.kind)}, {"euler_deg", m.euler_deg}};
    if (m.kind == MeasurementKind::explicit_matrix) j["matrix"] = to_json(m.matrix);
    return j;
}

MeasurementSpec measurement_from_json(const Json& j)
{
    check_object(j, {"kind", "euler_deg", "rotation_deg", "matrix"}, "measurement");
    MeasurementSpec m;
    std::string kind = to_string(m.kind);
    read(j, "kind", kind, "measurement");
    m.kind = measurement_kind_from_string(kind);
    read(j, "euler_deg", m.euler_deg, "measurement");
    if (j.contains("rotation_deg")) read(j, "rotation_deg", m.euler_deg[2], "measurement");
    if (j.contains("matrix")) m.matrix = mat_from_json(j.at("matrix"));
    return m;
}

Json to_json(const SsmSpec& s)
{
    return Json{{"n_x", s.n_x},
                {"n_z", s.n_z},
                {"transition", to_json(s.transition)},
                {"measurement", to_json(s.measurement)},
                {"process_noise", to_json(s.process_noise)},
                {"meas_noise", to_json(s.meas_noise)}};
}

SsmSpec ssm_from_json(const Json& j)
{
    check_object(j, {"n_x", "n_z", "transition", "measurement", "process_noise", "meas_noise"}, "ssm");
    SsmSpec s;
    read(j, "n_x", s.n_x, "ssm");
    read(j, "n_z", s.n_z, "ssm");
    if (j.contains("transition")) s.transition = transition_from_json(j.at("transition"));
    if (j.contains("measurement")) s.measurement = measurement_from_json(j.at("measurement"));
    s.process_noise = j.contains("process_noise") ? noise_from_json(j.at("process_noise")) : NoiseSpec::zero(s.n_x);
    s.meas_noise = j.contains("meas_noise") ? noise_from_json(j.at("meas_noise")) : NoiseSpec::zero(s.n_z);
    s.validate();
    return s;
}

Json to_json(const LorenzScenario& s)
{
    return Json{{"measurement", to_json(s.measurement)},
                {"noise", to_string(s.noise)},
                {"mix_weight", s.mix_weight},
                {"mix_scale", s.mix_scale},
                {"delta", s.delta},
                {"taylor_order", order_json(s.taylor_order)}};
}

LorenzScenario lorenz_scenario_from_json(const Json& j)
{
    check_object(j, {"measurement", "noise", "mix_weight", "mix_scale", "delta", "taylor_order"}, "scenario");
    LorenzScenario s;
    if (j.contains("measurement")) s.measurement = measurement_from_json(j.at("measurement"));
    std::string noise = to_string(s.noise);
    read(j, "noise", noise, "scenario");
    s.noise = noise_kind_from_string(noise);
    read(j, "mix_weight", s.mix_weight, "scenario");
    read(j, "mix_scale", s.mix_scale, "scenario");
    read(j, "delta", s.delta, "scenario");
    s.taylor_order = read_order(j, "taylor_order", s.taylor_order);
    return s;
}

// ---------------------------------------------------------------------------
// Filter, network, training
// ---------------------------------------------------------------------------

Json to_json(const FilterConfig& c)
{
    return Json{{"ukf_alpha", c.ukf_alpha},         {"ukf_beta", c.ukf_beta},
                {"ukf_kappa", c.ukf_kappa},         {"pf_particles", c.pf_particles},
                {"pf_ess_fraction", c.pf_ess_fraction}, {"jacobian_step", c.jacobian_step},
                {"init_cov", c.init_cov}};
}

FilterConfig filter_config_from_json(const Json& j)
{
    const std::string w = "filter";
    check_object(j, {"ukf_alpha", "ukf_beta", "ukf_kappa", "pf_particles", "pf_ess_fraction", "jacobian_step", "init_cov"},
                 w);
    FilterConfig c;
    read(j, "ukf_alpha", c.ukf_alpha, w);
    read(j, "ukf_beta", c.ukf_beta, w);
    read(j, "ukf_kappa", c.ukf_kappa, w);
    read(j, "pf_particles", c.pf_particles, w);
    read(j, "pf_ess_fraction", c.pf_ess_fraction, w);
    read(j, "jacobian_step", c.jacobian_step, w);
    read(j, "init_cov", c.init_cov, w);
    c.validate();
    return c;
}

Json to_json(const NetConfig& c)
{
    return Json{{"horizon", c.horizon},
                {"width", c.width},
                {"cond_width", c.cond_width},
                {"cond_length", c.cond_length},
                {"base_channels", c.base_channels},
                {"channel_multipliers", c.channel_multipliers},
                {"kernel_size", c.kernel_size},
                {"time_embed_dim", c.time_embed_dim},
                {"cond_embed_dim", c.cond_embed_dim},
                {"groups", c.groups}};
}

NetConfig net_config_from_json(const Json& j)
{
    const std::string w = "net";
    check_object(j, {"horizon", "width", "cond_width", "cond_length", "base_channels", "channel_multipliers",
                     "kernel_size", "time_embed_dim", "cond_embed_dim", "groups"},
                 w);
    NetConfig c;
    read(j, "horizon", c.horizon, w);
    read(j, "width", c.width, w);
    read(j, "cond_width", c.cond_width, w);
    read(j, "cond_length", c.cond_length, w);
    read(j, "base_channels", c.base_channels, w);
    read(j, "channel_multipliers", c.channel_multipliers, w);
    read(j, "kernel_size", c.kernel_size, w);
    read(j, "time_embed_dim", c.time_embed_dim, w);
    read(j, "cond_embed_dim", c.cond_embed_dim, w);
    read(j, "groups", c.groups, w);
    c.validate();
    return c;
}

Json to_json(const GuidanceConfig& c)
{
    return Json{{"omega", c.omega},
                {"temp_scale", c.temp_scale},
                {"predict_shift_mode", to_string(c.predict_shift_mode)}};
}

GuidanceConfig guidance_from_json(const Json& j)
{
    const std::string w = "guidance";
    check_object(j, {"omega", "temp_scale", "predict_shift_mode"}, w);
    GuidanceConfig c;
    read(j, "omega", c.omega, w);
    read(j, "temp_scale", c.temp_scale, w);
    std::string mode = to_string(c.predict_shift_mode);
    read(j, "predict_shift_mode", mode, w);
    c.predict_shift_mode = predict_shift_mode_from_string(mode);
    c.validate();
    return c;
}

Json to_json(const TrainConfig& c)
{
    return Json{{"learning_rate", c.learning_rate},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"steps_per_epoch", c.steps_per_epoch},
                {"cond_dropout_p", c.cond_dropout_p},
                {"dynamic_loss_weight", c.dynamic_loss_weight},
                {"dynamic_all_slots", c.dynamic_all_slots},
                {"grad_clip", c.grad_clip}};
}

TrainConfig train_config_from_json(const Json& j)
{
    const std::string w = "train";
    check_object(j, {"learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "batch_size", "epochs", "steps_per_epoch",
                     "cond_dropout_p", "dynamic_loss_weight", "dynamic_all_slots", "grad_clip"},
                 w);
    TrainConfig c;
    read(j, "learning_rate", c.learning_rate, w);
    read(j, "adam_beta1", c.adam_beta1, w);
    read(j, "adam_beta2", c.adam_beta2, w);
    read(j, "adam_eps", c.adam_eps, w);
    read(j, "batch_size", c.batch_size, w);
    read(j, "epochs", c.epochs, w);
    read(j, "steps_per_epoch", c.steps_per_epoch, w);
    read(j, "cond_dropout_p", c.cond_dropout_p, w);
    read(j, "dynamic_loss_weight", c.dynamic_loss_weight, w);
    read(j, "dynamic_all_slots", c.dynamic_all_slots, w);
    read(j, "grad_clip", c.grad_clip, w);
    c.validate();
    return c;
}

Json to_json(const DatasetConfig& c)
{
    return Json{{"n_trajectories", c.n_trajectories},
                {"trajectory_length", c.trajectory_length},
                {"horizon", c.horizon},
                {"cond_length", c.cond_length},
                {"stride", c.stride},
                {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}}};
}

DatasetConfig dataset_config_from_json(const Json& j)
{
    const std::string w = "dataset";
    check_object(j, {"n_trajectories", "trajectory_length", "horizon", "cond_length", "stride", "ratios"}, w);
    DatasetConfig c;
    read(j, "n_trajectories", c.n_trajectories, w);
    read(j, "trajectory_length", c.trajectory_length, w);
    read(j, "horizon", c.horizon, w);
    read(j, "cond_length", c.cond_length, w);
    read(j, "stride", c.stride, w);
    if (j.contains("ratios")) {
        std::vector<double> r;
        read(j, "ratios", r, w);
        if (r.size() != 3) throw Error("dataset: ratios need three entries");
        c.ratios = SplitRatios{r[0], r[1], r[2]};
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Benchmarks
// ---------------------------------------------------------------------------

Json to_json(const ScenarioConfig& c)
{
    std::vector<std::string> filters;
    for (FilterKind f : c.filters) filters.push_back(to_string(f));
    return Json{{"name", c.name},
                {"truth", to_json(c.truth)},
                {"model", to_json(c.model)},
                {"grid_db", c.grid_db},
                {"nu_db", c.nu_db},
                {"horizon", c.horizon},
                {"n_test_trajectories", c.n_test_trajectories},
                {"trackdiffuser_trajectories", c.trackdiffuser_trajectories},
                {"filters", filters},
                {"filter", to_json(c.filter)},
                {"guidance", to_json(c.guidance)},
                {"seed", c.seed},
                {"threads", c.threads}};
}

ScenarioConfig scenario_from_json(const Json& j)
{
    const std::string w = "benchmark";
    check_object(j, {"name", "truth", "model", "grid_db", "nu_db", "horizon", "n_test_trajectories",
                     "trackdiffuser_trajectories", "filters", "filter", "guidance", "seed", "threads"},
                 w);
    ScenarioConfig c;
    read(j, "name", c.name, w);
    if (j.contains("truth")) c.truth = lorenz_scenario_from_json(j.at("truth"));
    if (j.contains("model")) {
        c.model = lorenz_scenario_from_json(j.at("model"));
    } else {
        c.model = c.truth;
        c.model.taylor_order = default_filter_model().taylor_order;
    }
    read(j, "grid_db", c.grid_db, w);
    read(j, "nu_db", c.nu_db, w);
    read(j, "horizon", c.horizon, w);
    read(j, "n_test_trajectories", c.n_test_trajectories, w);
    read(j, "trackdiffuser_trajectories", c.trackdiffuser_trajectories, w);
    if (j.contains("filters")) {
        std::vector<std::string> names;
        read(j, "filters", names, w);
        c.filters.clear();
        for (const auto& n : names) c.filters.push_back(filter_kind_from_string(n));
    }
    if (j.contains("filter")) c.filter = filter_config_from_json(j.at("filter"));
    if (j.contains("guidance")) c.guidance = guidance_from_json(j.at("guidance"));
    read(j, "seed", c.seed, w);
    read(j, "threads", c.threads, w);
    c.validate();
    return c;
}

Json to_json(const NcltConfig& c)
{
    return Json{{"raw_points", c.raw_points},
                {"rate_hz", c.rate_hz},
                {"n_trajectories", c.n_trajectories},
                {"trajectory_length", c.trajectory_length},
                {"split", {c.train, c.val, c.test}},
                {"timestamp_scale", c.timestamp_scale},
                {"gt_columns", {c.gt_time_col, c.gt_x_col, c.gt_y_col}},
                {"odometry_columns", {c.odo_time_col, c.odo_x_col, c.odo_y_col}},
                {"odometry_is_pose", c.odometry_is_pose},
                {"horizon", c.horizon},
                {"cond_length", c.cond_length}};
}

NcltConfig nclt_config_from_json(const Json& j)
{
    const std::string w = "nclt";
    check_object(j, {"raw_points", "rate_hz", "n_trajectories", "trajectory_length", "split", "timestamp_scale",
                     "gt_columns", "odometry_columns", "odometry_is_pose", "horizon", "cond_length"},
                 w);
    NcltConfig c;
    read(j, "raw_points", c.raw_points, w);
    read(j, "rate_hz", c.rate_hz, w);
    read(j, "n_trajectories", c.n_trajectories, w);
    read(j, "trajectory_length", c.trajectory_length, w);
    if (j.contains("split")) {
        std::vector<std::size_t> s;
        read(j, "split", s, w);
        if (s.size() != 3) throw Error("nclt: split needs three counts");
        c.train = s[0];
        c.val = s[1];
        c.test = s[2];
    }
    read(j, "timestamp_scale", c.timestamp_scale, w);
    const auto cols = [&](const char* key, int& t, int& a, int& b) {
        if (!j.contains(key)) return;
        std::vector<int> v;
        read(j, key, v, w);
        if (v.size() != 3) throw Error("nclt: column lists need three indices");
        t = v[0];
        a = v[1];
        b = v[2];
    };
    cols("gt_columns", c.gt_time_col, c.gt_x_col, c.gt_y_col);
    cols("odometry_columns", c.odo_time_col, c.odo_x_col, c.odo_y_col);
    read(j, "odometry_is_pose", c.odometry_is_pose, w);
    read(j, "horizon", c.horizon, w);
    read(j, "cond_length", c.cond_length, w);
    c.validate();
    return c;
}

Json to_json(const Normalizer& n) { return Json{{"mean", to_json(n.mean)}, {"std", to_json(n.std)}}; }

Normalizer normalizer_from_json(const Json& j)
{
    check_object(j, {"mean", "std"}, "normalizer");
    if (!j.contains("mean") || !j.contains("std")) throw Error("normalizer: missing mean or std");
    Normalizer n{vec_from_json(j.at("mean")), vec_from_json(j.at("std"))};
    if (n.mean.size() != n.std.size()) throw Error("normalizer: mean and std lengths differ");
    if ((n.std.array() <= 0.0).any()) throw Error("normalizer: std must be positive");
    return n;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("cannot write '" + path.string() + "'");
}

Json read_json_file(const std::filesystem::path& path)
{
    try {
        return Json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("malformed config '" + path.string() + "': " + e.what());
    }
}

} // namespace trackdiff
