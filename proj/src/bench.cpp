#include "trackdiff/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace trackdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kTrackBatchLanes = 32;

/// Runs fn(0..n-1) on up to `threads` workers. Each index must be independent.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn)
{
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::uint64_t filter_stream(FilterKind kind) { return static_cast<std::uint64_t>(kind) + 1; }

Vec baseline_estimate(const MeasurementSpec& spec, const Vec& z)
{
    switch (spec.kind) {
    case MeasurementKind::identity:
    case MeasurementKind::rotated_identity:
        return z;
    case MeasurementKind::cartesian_to_spherical:
        return spherical_to_cartesian(z);
    case MeasurementKind::explicit_matrix:
        return spec.matrix.completeOrthogonalDecomposition().solve(z);
    }
    throw Error("unknown measurement kind");
}

std::vector<std::vector<Vec>> truths_of(const std::vector<Trajectory>& data, std::size_t count)
{
    std::vector<std::vector<Vec>> out;
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(data[i].states.begin() + 1, data[i].states.end());
    return out;
}

ConfigEcho make_echo(const ScenarioConfig& sc, const LorenzScenario& truth, const LorenzScenario& model)
{
    ConfigEcho e;
    e.truth_measurement = to_string(truth.measurement.kind);
    e.truth_theta_deg = truth.measurement.rotation_deg();
    e.truth_noise = to_string(truth.noise);
    e.truth_J = truth.taylor_order ? std::to_string(*truth.taylor_order) : "exact";
    e.model_measurement = to_string(model.measurement.kind);
    e.model_theta_deg = model.measurement.rotation_deg();
    e.model_noise = to_string(model.noise);
    e.model_J = model.taylor_order ? std::to_string(*model.taylor_order) : "exact";
    e.mix_weight = truth.mix_weight;
    e.mix_scale = truth.mix_scale;
    e.delta = truth.delta;
    e.nu_db = sc.nu_db;
    e.horizon = sc.horizon;
    e.n_test_trajectories = sc.n_test_trajectories;
    e.trackdiffuser_trajectories = sc.trackdiffuser_trajectories;
    e.omega = sc.guidance.omega;
    e.temp_scale = sc.guidance.temp_scale;
    e.predict_shift = to_string(sc.guidance.predict_shift_mode);
    e.ukf_alpha = sc.filter.ukf_alpha;
    e.ukf_beta = sc.filter.ukf_beta;
    e.ukf_kappa = sc.filter.ukf_kappa;
    e.pf_particles = sc.filter.pf_particles;
    e.pf_ess_fraction = sc.filter.pf_ess_fraction;
    e.init_cov = sc.filter.init_cov;
    e.seed = sc.seed;
    return e;
}

ReportCell evaluate_one(FilterKind kind, const ScenarioConfig& sc, const SsmSpec& model_ssm,
                        const std::vector<Trajectory>& data, double inv_r2_db, const std::string& variant,
                        const ModelTable& models, std::uint64_t filter_seed, const ConfigEcho& echo)
{
    ReportCell cell;
    cell.filter = to_string(kind);
    cell.inv_r2_db = inv_r2_db;
    cell.variant = variant;
    cell.echo = echo;
    cell.degradation_db = kNaN;

    std::size_t count = data.size();
    if (kind == FilterKind::trackdiffuser && sc.trackdiffuser_trajectories > 0)
        count = std::min(count, static_cast<std::size_t>(sc.trackdiffuser_trajectories));
    cell.trajectories = static_cast<int>(count);

    try {
        std::vector<std::vector<Vec>> est(count);
        switch (kind) {
        case FilterKind::baseline:
            for (std::size_t i = 0; i < count; ++i)
                for (const Vec& z : data[i].measurements)
                    est[i].push_back(baseline_estimate(model_ssm.measurement, z));
            break;
        case FilterKind::ekf:
        case FilterKind::ukf:
        case FilterKind::pf: {
            const ClassicalFilter cf = kind == FilterKind::ekf   ? ClassicalFilter::ekf
                                       : kind == FilterKind::ukf ? ClassicalFilter::ukf
                                                                 : ClassicalFilter::pf;
            for (std::size_t i = 0; i < count; ++i) {
                Rng rng = make_rng(mix_seed(filter_seed, filter_stream(kind)), i);
                est[i] = run_filter(cf, data[i].measurements, data[i].states.front(), model_ssm, sc.filter, rng);
            }
            break;
        }
        case FilterKind::trackdiffuser: {
            const auto model = models.find(variant, inv_r2_db);
            if (!model) throw Error("no trained model");
            cell.echo.K = model->diffusion_steps;
            cell.echo.schedule = to_string(model->schedule);
            cell.echo.L = model->net.cond_length;
            cell.echo.model_digest = model_digest(*model);
            const NetworkDenoiser net(model->net, model->params);
            const TransitionSpec transition = model_ssm.transition;
            const TrackDiffuser td(net, model->net.horizon, model->net.cond_length,
                                   build_schedule(model->diffusion_steps, model->schedule), sc.guidance,
                                   model->normalizer, [transition](const Vec& x) { return propagate(transition, x); });
            for (std::size_t start = 0; start < count; start += kTrackBatchLanes) {
                const std::size_t end = std::min(count, start + kTrackBatchLanes);
                std::vector<std::vector<Vec>> meas;
                std::vector<Vec> x0;
                std::vector<Rng> rngs;
                for (std::size_t i = start; i < end; ++i) {
                    meas.push_back(data[i].measurements);
                    x0.push_back(data[i].states.front());
                    rngs.push_back(make_rng(mix_seed(filter_seed, filter_stream(kind)), i));
                }
                auto out = td.track_batch(meas, x0, rngs);
                for (std::size_t i = start; i < end; ++i) est[i] = std::move(out[i - start]);
            }
            break;
        }
        }
        cell.mse_db = mse_db(est, truths_of(data, count));
    } catch (const Error& e) {
        cell.mse_db = kNaN;
        cell.status = e.what();
    }
    return cell;
}

SsmSpec scenario_ssm(const LorenzScenario& s, double inv_r2_db, double nu_db)
{
    return make_lorenz_ssm(s, noise_levels(inv_r2_db, nu_db));
}

} // namespace

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

double mse_linear(const std::vector<std::vector<Vec>>& estimates, const std::vector<std::vector<Vec>>& truths)
{
    if (estimates.size() != truths.size()) throw Error("shape mismatch: trajectory counts differ");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (estimates[i].size() != truths[i].size()) throw Error("shape mismatch: trajectory lengths differ");
        for (std::size_t t = 0; t < truths[i].size(); ++t) {
            if (estimates[i][t].size() != truths[i][t].size()) throw Error("shape mismatch: state dimensions differ");
            sum += (estimates[i][t] - truths[i][t]).squaredNorm();
            n += static_cast<std::size_t>(truths[i][t].size());
        }
    }
    if (n == 0) throw Error("mse: no elements");
    return sum / static_cast<double>(n);
}

double mse_db(const std::vector<std::vector<Vec>>& estimates, const std::vector<std::vector<Vec>>& truths)
{
    const double m = mse_linear(estimates, truths);
    if (!std::isfinite(m)) throw Error("filter diverged");
    return m == 0.0 ? kMseFloorDb : 10.0 * std::log10(m);
}

std::string to_string(FilterKind kind)
{
    switch (kind) {
    case FilterKind::ekf: return "ekf";
    case FilterKind::ukf: return "ukf";
    case FilterKind::pf: return "pf";
    case FilterKind::trackdiffuser: return "trackdiffuser";
    case FilterKind::baseline: return "baseline";
    }
    return "?";
}

FilterKind filter_kind_from_string(const std::string& s)
{
    for (FilterKind k : {FilterKind::ekf, FilterKind::ukf, FilterKind::pf, FilterKind::trackdiffuser, FilterKind::baseline})
        if (to_string(k) == s) return k;
    throw Error("unknown filter '" + s + "'");
}

std::string to_string(MismatchKind kind)
{
    switch (kind) {
    case MismatchKind::dynamics_J2: return "dynamics_J2";
    case MismatchKind::rotation_1deg: return "rotation_1deg";
    case MismatchKind::train_test_J: return "train_test_J";
    }
    return "?";
}

MismatchKind mismatch_kind_from_string(const std::string& s)
{
    for (MismatchKind k : {MismatchKind::dynamics_J2, MismatchKind::rotation_1deg, MismatchKind::train_test_J})
        if (to_string(k) == s) return k;
    throw Error("unknown mismatch suite '" + s + "'");
}

void ScenarioConfig::validate() const
{
    if (grid_db.empty()) throw Error("benchmark: empty noise grid");
    if (n_test_trajectories < 1) throw Error("benchmark: n_test_trajectories must be >= 1");
    if (horizon < 1) throw Error("benchmark: horizon must be >= 1");
    if (trackdiffuser_trajectories < 0) throw Error("benchmark: trackdiffuser_trajectories must be >= 0");
    if (filters.empty()) throw Error("benchmark: no filters requested");
    if (threads < 1) throw Error("benchmark: threads must be >= 1");
    filter.validate();
    guidance.validate();
}

bool ReportCell::operator==(const ReportCell& o) const
{
    // NaN cells compare equal to NaN so failed cells still round-trip.
    const auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return suite == o.suite && scenario == o.scenario && variant == o.variant && filter == o.filter
           && same(inv_r2_db, o.inv_r2_db) && same(mse_db, o.mse_db) && same(degradation_db, o.degradation_db)
           && trajectories == o.trajectories && status == o.status && echo == o.echo;
}

const ReportCell* MseReport::find(const std::string& filter, double inv_r2_db, const std::string& variant) const
{
    for (const ReportCell& c : cells)
        if (c.filter == filter && c.inv_r2_db == inv_r2_db && c.variant == variant) return &c;
    return nullptr;
}

void ModelTable::add(const std::string& variant, double inv_r2_db, std::shared_ptr<const TrackDiffuserModel> model)
{
    models_[{variant, inv_r2_db}] = std::move(model);
}

std::shared_ptr<const TrackDiffuserModel> ModelTable::find(const std::string& variant, double inv_r2_db) const
{
    if (auto it = models_.find({variant, inv_r2_db}); it != models_.end()) return it->second;
    if (auto it = models_.find({"default", inv_r2_db}); it != models_.end()) return it->second;
    return nullptr;
}

std::vector<Trajectory> make_test_set(const SsmSpec& truth, int count, int horizon, std::uint64_t seed)
{
    std::vector<Trajectory> out(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < out.size(); ++i) {
        Rng rng = make_rng(seed, i);
        const Vec x0 = lorenz_initial_state(rng, truth.transition.delta);
        out[i] = simulate_trajectory(truth, x0, static_cast<std::size_t>(horizon), rng);
    }
    return out;
}

std::vector<ReportCell> evaluate_cells(const ScenarioConfig& sc, const SsmSpec& model_ssm,
                                       const std::vector<Trajectory>& data, double inv_r2_db,
                                       const std::string& variant, const ModelTable& models, std::uint64_t filter_seed)
{
    const ConfigEcho echo = make_echo(sc, sc.truth, sc.model);
    std::vector<ReportCell> out;
    for (FilterKind k : sc.filters)
        out.push_back(evaluate_one(k, sc, model_ssm, data, inv_r2_db, variant, models, filter_seed, echo));
    return out;
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

namespace {

/// One evaluation arm: which scenario generates the data and which model the
/// filters are given.
struct Arm {
    std::string variant;
    LorenzScenario truth;
    LorenzScenario model;
};

struct GridTask {
    std::size_t grid_index;
    double inv_r2_db;
    std::size_t arm;
    FilterKind filter;
};

/// Evaluates every (grid point, arm, filter). Arms sharing a truth scenario
/// see the same test trajectories because the data seed depends only on the
/// grid index.
MseReport run_arms(const ScenarioConfig& sc, const std::string& suite, const std::vector<double>& grid,
                   const std::vector<Arm>& arms, const ModelTable& models)
{
    sc.validate();
    std::vector<std::vector<std::vector<Trajectory>>> data(grid.size(), std::vector<std::vector<Trajectory>>(arms.size()));
    std::vector<std::pair<std::size_t, std::size_t>> gen;
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (std::size_t a = 0; a < arms.size(); ++a) gen.emplace_back(g, a);
    parallel_for(gen.size(), sc.threads, [&](std::size_t i) {
        const auto [g, a] = gen[i];
        const SsmSpec truth = scenario_ssm(arms[a].truth, grid[g], sc.nu_db);
        data[g][a] = make_test_set(truth, sc.n_test_trajectories, sc.horizon, mix_seed(sc.seed, g));
    });

    std::vector<GridTask> tasks;
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (std::size_t a = 0; a < arms.size(); ++a)
            for (FilterKind f : sc.filters) tasks.push_back(GridTask{g, grid[g], a, f});
    std::vector<ReportCell> cells(tasks.size());
    parallel_for(tasks.size(), sc.threads, [&](std::size_t i) {
        const GridTask& t = tasks[i];
        const Arm& arm = arms[t.arm];
        const SsmSpec model_ssm = scenario_ssm(arm.model, t.inv_r2_db, sc.nu_db);
        const std::uint64_t filter_seed = mix_seed(mix_seed(sc.seed, t.grid_index), 0xF11EULL);
        cells[i] = evaluate_one(t.filter, sc, model_ssm, data[t.grid_index][t.arm], t.inv_r2_db, arm.variant, models,
                                filter_seed, make_echo(sc, arm.truth, arm.model));
        cells[i].suite = suite;
        cells[i].scenario = sc.name;
    });

    // Degradation of each non-reference arm against the first arm.
    if (arms.size() > 1)
        for (ReportCell& c : cells) {
            if (c.variant == arms.front().variant) continue;
            for (const ReportCell& ref : cells)
                if (ref.variant == arms.front().variant && ref.filter == c.filter && ref.inv_r2_db == c.inv_r2_db)
                    c.degradation_db = c.mse_db - ref.mse_db;
        }
    return MseReport{std::move(cells)};
}

} // namespace

MseReport run_benchmark(const ScenarioConfig& sc, const ModelTable& models)
{
    return run_arms(sc, "benchmark", sc.grid_db, {Arm{"default", sc.truth, sc.model}}, models);
}

MseReport run_mismatch_suite(MismatchKind kind, const ScenarioConfig& base, const ModelTable& models)
{
    const std::string suite = to_string(kind);
    LorenzScenario exact = base.truth;
    exact.taylor_order = std::nullopt;
    switch (kind) {
    case MismatchKind::dynamics_J2: {
        LorenzScenario j2 = exact;
        j2.taylor_order = 2;
        LorenzScenario model_j2 = base.model;
        model_j2.taylor_order = 2;
        return run_arms(base, suite, base.grid_db, {Arm{"matched", exact, base.model}, Arm{"mismatched", exact, model_j2}},
                        models);
    }
    case MismatchKind::rotation_1deg: {
        LorenzScenario plain = exact;
        plain.measurement = MeasurementSpec{};
        LorenzScenario rotated = plain;
        rotated.measurement.kind = MeasurementKind::rotated_identity;
        rotated.measurement.euler_deg = {0.0, 0.0, 1.0};
        LorenzScenario model = base.model;
        model.measurement = MeasurementSpec{};
        return run_arms(base, suite, base.grid_db, {Arm{"matched", plain, model}, Arm{"mismatched", rotated, model}},
                        models);
    }
    case MismatchKind::train_test_J: {
        LorenzScenario model_exact = base.model;
        model_exact.taylor_order = std::nullopt;
        std::vector<Arm> arms{Arm{"matched", exact, model_exact}};
        for (int j = 1; j <= 5; ++j) {
            LorenzScenario m = model_exact;
            m.taylor_order = j;
            arms.push_back(Arm{"J" + std::to_string(j), exact, m});
        }
        return run_arms(base, suite, {20.0}, arms, models);
    }
    }
    throw Error("unknown mismatch suite");
}

ScenarioConfig scenario_from_report(const MseReport& report)
{
    if (report.cells.empty()) throw Error("report: no cells");
    const ReportCell* ref = &report.cells.front();
    for (const ReportCell& c : report.cells)
        if (c.variant == "default" || c.variant == "matched") {
            ref = &c;
            break;
        }
    const ConfigEcho& e = ref->echo;
    const auto scenario = [&](const std::string& meas, double theta, const std::string& noise, const std::string& J) {
        LorenzScenario s;
        s.measurement.kind = measurement_kind_from_string(meas);
        s.measurement.euler_deg = {0.0, 0.0, theta};
        s.noise = noise_kind_from_string(noise);
        s.mix_weight = e.mix_weight;
        s.mix_scale = e.mix_scale;
        s.delta = e.delta;
        s.taylor_order = J == "exact" ? std::nullopt : std::optional<int>(std::stoi(J));
        return s;
    };
    ScenarioConfig sc;
    sc.name = ref->scenario;
    sc.truth = scenario(e.truth_measurement, e.truth_theta_deg, e.truth_noise, e.truth_J);
    sc.model = scenario(e.model_measurement, e.model_theta_deg, e.model_noise, e.model_J);
    sc.nu_db = e.nu_db;
    sc.horizon = e.horizon;
    sc.n_test_trajectories = e.n_test_trajectories;
    sc.trackdiffuser_trajectories = e.trackdiffuser_trajectories;
    sc.guidance.omega = e.omega;
    sc.guidance.temp_scale = e.temp_scale;
    sc.guidance.predict_shift_mode = predict_shift_mode_from_string(e.predict_shift);
    sc.filter.ukf_alpha = e.ukf_alpha;
    sc.filter.ukf_beta = e.ukf_beta;
    sc.filter.ukf_kappa = e.ukf_kappa;
    sc.filter.pf_particles = e.pf_particles;
    sc.filter.pf_ess_fraction = e.pf_ess_fraction;
    sc.filter.init_cov = e.init_cov;
    sc.seed = e.seed;
    sc.grid_db.clear();
    sc.filters.clear();
    for (const ReportCell& c : report.cells) {
        if (std::find(sc.grid_db.begin(), sc.grid_db.end(), c.inv_r2_db) == sc.grid_db.end())
            sc.grid_db.push_back(c.inv_r2_db);
        const FilterKind f = filter_kind_from_string(c.filter);
        if (std::find(sc.filters.begin(), sc.filters.end(), f) == sc.filters.end()) sc.filters.push_back(f);
    }
    return sc;
}

} // namespace trackdiff
