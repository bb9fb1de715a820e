#include "trackdiff/nclt.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace trackdiff {

void NcltConfig::validate() const
{
    if (raw_points < 2) throw Error("nclt: raw_points must be >= 2");
    if (!(rate_hz > 0.0)) throw Error("nclt: rate_hz must be positive");
    if (n_trajectories < 1 || trajectory_length < 1) throw Error("nclt: trajectory counts must be positive");
    if (train + val + test > static_cast<std::size_t>(n_trajectories)) throw Error("nclt: split exceeds trajectory count");
    if (!(timestamp_scale > 0.0)) throw Error("nclt: timestamp_scale must be positive");
    for (int c : {gt_time_col, gt_x_col, gt_y_col, odo_time_col, odo_x_col, odo_y_col})
        if (c < 0) throw Error("nclt: column indices must be non-negative");
    if (horizon < cond_length || cond_length < 1) throw Error("nclt: need horizon >= cond_length >= 1");
}

namespace {

bool looks_numeric(const std::string& line)
{
    const auto p = line.find_first_not_of(" \t");
    if (p == std::string::npos) return false;
    const char c = line[p];
    return (c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.';
}

double parse_field(const std::string& s, std::size_t line_no)
{
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) throw Error("nclt: empty field on line " + std::to_string(line_no));
    const char* first = s.data() + b;
    const char* last = s.data() + e + 1;
    if (*first == '+') ++first;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw Error("nclt: bad number on line " + std::to_string(line_no));
    return v;
}

std::vector<Eigen::Vector2d> backward_rate(const std::vector<Eigen::Vector2d>& p, double rate)
{
    std::vector<Eigen::Vector2d> v(p.size(), Eigen::Vector2d::Zero());
    if (p.size() < 2) return v;
    for (std::size_t i = 1; i < p.size(); ++i) v[i] = (p[i] - p[i - 1]) * rate;
    v[0] = v[1];
    return v;
}

} // namespace

TimedSeries read_timed_series(std::istream& is, int time_col, int a_col, int b_col, double timestamp_scale,
                              std::size_t max_rows)
{
    TimedSeries out;
    const auto need = static_cast<std::size_t>(std::max({time_col, a_col, b_col}));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!looks_numeric(line)) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() <= need)
            throw Error("nclt: missing column " + std::to_string(need) + " on line " + std::to_string(line_no));
        const double t = parse_field(fields[static_cast<std::size_t>(time_col)], line_no) * timestamp_scale;
        if (!out.time.empty() && t < out.time.back())
            throw Error("nclt: non-monotone timestamps at line " + std::to_string(line_no));
        out.time.push_back(t);
        out.value.emplace_back(parse_field(fields[static_cast<std::size_t>(a_col)], line_no),
                               parse_field(fields[static_cast<std::size_t>(b_col)], line_no));
        if (max_rows && out.time.size() == max_rows) break;
    }
    return out;
}

std::vector<double> resample_grid(const std::vector<double>& time, double rate_hz)
{
    if (time.size() < 2) throw Error("nclt: need at least two samples to resample");
    const double span = time.back() - time.front();
    const auto steps = static_cast<long>(std::llround(span * rate_hz));
    std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = time.front() + static_cast<double>(i) / rate_hz;
    return grid;
}

std::vector<std::size_t> nearest_indices(const std::vector<double>& time, const std::vector<double>& grid)
{
    if (time.empty()) throw Error("nclt: no samples");
    std::vector<std::size_t> out;
    out.reserve(grid.size());
    std::size_t j = 0;
    for (double g : grid) {
        while (j + 1 < time.size() && std::abs(time[j + 1] - g) <= std::abs(time[j] - g)) ++j;
        out.push_back(j);
    }
    return out;
}

std::vector<Trajectory> nclt_trajectories(const TimedSeries& ground_truth, const TimedSeries& odometry,
                                          const NcltConfig& cfg)
{
    cfg.validate();
    TimedSeries gt = ground_truth;
    if (gt.time.size() > cfg.raw_points) {
        gt.time.resize(cfg.raw_points);
        gt.value.resize(cfg.raw_points);
    }
    const std::vector<double> grid = resample_grid(gt.time, cfg.rate_hz);
    const auto needed = static_cast<std::size_t>(cfg.n_trajectories) * static_cast<std::size_t>(cfg.trajectory_length) + 1;
    if (grid.size() < needed)
        throw Error("nclt: " + std::to_string(grid.size() - 1) + " resampled steps, need "
                    + std::to_string(needed - 1));

    std::vector<Eigen::Vector2d> pos, odo;
    for (std::size_t i : nearest_indices(gt.time, grid)) pos.push_back(gt.value[i]);
    for (std::size_t i : nearest_indices(odometry.time, grid)) odo.push_back(odometry.value[i]);
    const std::vector<Eigen::Vector2d> vel = backward_rate(pos, cfg.rate_hz);
    const std::vector<Eigen::Vector2d> odo_vel = cfg.odometry_is_pose ? backward_rate(odo, cfg.rate_hz) : odo;
    const double dt = 1.0 / cfg.rate_hz;

    std::vector<Trajectory> out;
    for (int c = 0; c < cfg.n_trajectories; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * static_cast<std::size_t>(cfg.trajectory_length);
        Trajectory tr;
        Eigen::Vector2d integrated = Eigen::Vector2d::Zero();
        for (int s = 0; s <= cfg.trajectory_length; ++s) {
            const std::size_t i = base + static_cast<std::size_t>(s);
            Vec x(4);
            x << pos[i] - pos[base], vel[i];
            tr.states.push_back(x);
            if (s == 0) continue;
            integrated += odo_vel[i] * dt;
            Vec z(4);
            z << integrated, odo_vel[i];
            tr.measurements.push_back(z);
        }
        out.push_back(std::move(tr));
    }
    return out;
}

Dataset nclt_dataset(std::vector<Trajectory> trajectories, const NcltConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    const SplitIndices split = split_fixed(trajectories.size(), cfg.train, cfg.val, cfg.test, seed);
    DatasetConfig dc;
    dc.n_trajectories = trajectories.size();
    dc.trajectory_length = cfg.trajectory_length;
    dc.horizon = cfg.horizon;
    dc.cond_length = cfg.cond_length;
    Dataset ds = assemble_dataset(std::move(trajectories), split, dc, seed, "nclt");
    auto& notes = ds.manifest.notes;
    notes.push_back("resampling: nearest timestamp on a " + std::to_string(cfg.rate_hz) + " Hz grid over the first "
                    + std::to_string(cfg.raw_points) + " ground-truth rows");
    notes.push_back("states: (x1, x2, v1, v2), positions relative to each trajectory's first point, velocities by "
                    "backward differences of resampled ground truth");
    notes.push_back(std::string("measurements: odometry ") + (cfg.odometry_is_pose ? "pose differenced to velocity" : "velocity")
                    + ", integrated as cumulative sum of v * dt from each trajectory's start");
    if (!split.unused.empty())
        notes.push_back("split: " + std::to_string(split.unused.size())
                        + " trajectories left unused because the train/val/test counts do not cover them all");
    return ds;
}

Dataset nclt_ingest(const std::filesystem::path& ground_truth_csv, const std::filesystem::path& odometry_csv,
                    const NcltConfig& cfg, std::uint64_t seed)
{
    std::ifstream gt_in(ground_truth_csv);
    if (!gt_in) throw Error("cannot open '" + ground_truth_csv.string() + "'");
    std::ifstream odo_in(odometry_csv);
    if (!odo_in) throw Error("cannot open '" + odometry_csv.string() + "'");
    const TimedSeries gt =
        read_timed_series(gt_in, cfg.gt_time_col, cfg.gt_x_col, cfg.gt_y_col, cfg.timestamp_scale, cfg.raw_points);
    const TimedSeries odo = read_timed_series(odo_in, cfg.odo_time_col, cfg.odo_x_col, cfg.odo_y_col, cfg.timestamp_scale);
    return nclt_dataset(nclt_trajectories(gt, odo, cfg), cfg, seed);
}

SsmSpec fit_nclt_model(const Dataset& ds, double rate_hz)
{
    const double dt = 1.0 / rate_hz;
    const WienerVelocityModel unit = wiener_velocity_model(dt, 1.0);
    const Mat q_inv = unit.process_cov.inverse();
    double quad = 0.0;
    std::size_t n_w = 0;
    Vec r_sum = Vec::Zero(4);
    std::size_t n_v = 0;
    for (std::size_t id : ds.manifest.trajectories.train) {
        const Trajectory& tr = ds.trajectories.at(id);
        for (std::size_t t = 1; t < tr.states.size(); ++t) {
            const Vec w = tr.states[t] - unit.motion * tr.states[t - 1];
            quad += w.dot(q_inv * w);
            ++n_w;
            r_sum += (tr.measurements[t - 1] - tr.states[t]).array().square().matrix();
            ++n_v;
        }
    }
    if (n_w == 0) throw Error("nclt: empty training split");
    const double q2 = std::max(quad / (4.0 * static_cast<double>(n_w)), 1e-12);
    const Vec r_diag = (r_sum / static_cast<double>(n_v)).cwiseMax(1e-9);

    SsmSpec ssm;
    ssm.n_x = 4;
    ssm.n_z = 4;
    ssm.transition.kind = TransitionKind::explicit_matrix;
    ssm.transition.delta = dt;
    ssm.transition.matrix = unit.motion;
    ssm.measurement.kind = MeasurementKind::identity;
    ssm.process_noise = NoiseSpec::gaussian(q2 * unit.process_cov);
    ssm.meas_noise = NoiseSpec::gaussian(r_diag.asDiagonal());
    ssm.validate();
    return ssm;
}

MseReport run_nclt(const Dataset& ds, const NcltConfig& cfg, const std::vector<FilterKind>& filters,
                   const TrackDiffuserModel* model, const GuidanceConfig& guidance, std::uint64_t seed)
{
    if (filters.empty()) throw Error("nclt: no filters requested");
    const SsmSpec ssm = fit_nclt_model(ds, cfg.rate_hz);
    const auto& ids = ds.manifest.trajectories.test;
    if (ids.empty()) throw Error("nclt: empty test split");

    std::vector<std::vector<Vec>> truth;
    for (std::size_t id : ids) {
        const Trajectory& tr = ds.trajectories.at(id);
        std::vector<Vec> p;
        for (std::size_t t = 1; t < tr.states.size(); ++t) p.push_back(tr.states[t].head(2));
        truth.push_back(std::move(p));
    }
    const auto positions = [](const std::vector<std::vector<Vec>>& est) {
        std::vector<std::vector<Vec>> out;
        for (const auto& e : est) {
            std::vector<Vec> p;
            for (const Vec& x : e) p.push_back(x.head(2));
            out.push_back(std::move(p));
        }
        return out;
    };

    MseReport report;
    for (FilterKind kind : filters) {
        ReportCell cell;
        cell.suite = "nclt";
        cell.scenario = "nclt";
        cell.filter = to_string(kind);
        cell.degradation_db = std::numeric_limits<double>::quiet_NaN();
        cell.trajectories = static_cast<int>(ids.size());
        cell.echo.truth_measurement = "odometry";
        cell.echo.model_measurement = to_string(ssm.measurement.kind);
        cell.echo.truth_noise = cell.echo.model_noise = "gaussian";
        cell.echo.truth_J = cell.echo.model_J = "-";
        cell.echo.delta = 1.0 / cfg.rate_hz;
        cell.echo.horizon = cfg.trajectory_length;
        cell.echo.n_test_trajectories = static_cast<int>(ids.size());
        cell.echo.omega = guidance.omega;
        cell.echo.temp_scale = guidance.temp_scale;
        cell.echo.predict_shift = to_string(guidance.predict_shift_mode);
        cell.echo.init_cov = FilterConfig{}.init_cov;
        cell.echo.seed = seed;
        try {
            std::vector<std::vector<Vec>> est;
            switch (kind) {
            case FilterKind::baseline:
                for (std::size_t id : ids) est.push_back(ds.trajectories.at(id).measurements);
                break;
            case FilterKind::ekf:
            case FilterKind::ukf:
            case FilterKind::pf:
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const Trajectory& tr = ds.trajectories.at(ids[i]);
                    Rng rng = make_rng(seed, i);
                    const ClassicalFilter cf = kind == FilterKind::ekf   ? ClassicalFilter::ekf
                                               : kind == FilterKind::ukf ? ClassicalFilter::ukf
                                                                         : ClassicalFilter::pf;
                    est.push_back(run_filter(cf, tr.measurements, tr.states.front(), ssm, FilterConfig{}, rng));
                }
                break;
            case FilterKind::trackdiffuser: {
                if (!model) throw Error("no trained model");
                cell.echo.K = model->diffusion_steps;
                cell.echo.schedule = to_string(model->schedule);
                cell.echo.L = model->net.cond_length;
                cell.echo.model_digest = model_digest(*model);
                const NetworkDenoiser net(model->net, model->params);
                const Mat F = ssm.transition.matrix;
                const TrackDiffuser td(net, model->net.horizon, model->net.cond_length,
                                       build_schedule(model->diffusion_steps, model->schedule), guidance,
                                       model->normalizer, [F](const Vec& x) -> Vec { return F * x; });
                std::vector<std::vector<Vec>> meas;
                std::vector<Vec> x0;
                std::vector<Rng> rngs;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const Trajectory& tr = ds.trajectories.at(ids[i]);
                    meas.push_back(tr.measurements);
                    x0.push_back(tr.states.front());
                    rngs.push_back(make_rng(mix_seed(seed, 0x7D), i));
                }
                est = td.track_batch(meas, x0, rngs);
                break;
            }
            }
            cell.mse_db = mse_db(positions(est), truth);
        } catch (const Error& e) {
            cell.mse_db = std::numeric_limits<double>::quiet_NaN();
            cell.status = e.what();
        }
        report.cells.push_back(std::move(cell));
    }
    return report;
}

} // namespace trackdiff
