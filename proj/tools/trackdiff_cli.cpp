// trackdiff command-line entry point.
//
// Every subcommand reads a JSON config (--config), an optional master seed
// override (--seed) and an output directory (--out). On failure it prints a
// single JSON line {"status":"error",...} to stderr and exits with code 1.

#include "trackdiff/config_io.hpp"
#include "trackdiff/report.hpp"
#include "trackdiff/trajectory_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace trackdiff;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
};

void check_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& what)
{
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
            throw Error(what + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(std::string("config: bad value for '") + key + "'");
    }
}

std::uint64_t seed_of(const Common& c, const Json& j) { return c.seed ? *c.seed : get_or<std::uint64_t>(j, "seed", 1); }

/// Path relative to the config file's directory.
fs::path resolve(const Common& c, const std::string& p)
{
    const fs::path path(p);
    return path.is_absolute() ? path : fs::path(c.config).parent_path() / path;
}

SsmSpec ssm_from_config(const Json& j)
{
    if (j.contains("ssm")) return ssm_from_json(j.at("ssm"));
    const LorenzScenario sc = j.contains("scenario") ? lorenz_scenario_from_json(j.at("scenario")) : LorenzScenario{};
    return make_lorenz_ssm(sc, noise_levels(get_or(j, "inv_r2_db", 10.0), get_or(j, "nu_db", -20.0)));
}

void write_json(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

ModelTable models_from_config(const Common& c, const Json& j)
{
    ModelTable table;
    if (!j.contains("models")) return table;
    for (const Json& m : j.at("models")) {
        auto model = std::make_shared<TrackDiffuserModel>(
            load_checkpoint(resolve(c, get_or<std::string>(m, "checkpoint", ""))));
        table.add(get_or<std::string>(m, "variant", "default"), get_or(m, "inv_r2_db", 10.0), std::move(model));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_simulate(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"ssm", "scenario", "inv_r2_db", "nu_db", "n_trajectories", "horizon", "seed"}, "simulate");
    const SsmSpec ssm = ssm_from_config(j);
    const std::uint64_t seed = seed_of(c, j);
    const int n = get_or(j, "n_trajectories", 10);
    const int horizon = get_or(j, "horizon", 100);
    std::vector<TrajectoryRecord> recs;
    for (int i = 0; i < n; ++i) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
        const Vec x0 = ssm.n_x == 3 ? lorenz_initial_state(rng, ssm.transition.delta) : Vec::Zero(ssm.n_x);
        recs.push_back({static_cast<std::size_t>(i), simulate_trajectory(ssm, x0, static_cast<std::size_t>(horizon), rng), {}});
    }
    fs::create_directories(c.out);
    write_trajectories_file(fs::path(c.out) / "trajectories.csv", recs);
    write_json(fs::path(c.out) / "ssm.json", to_json(ssm));
}

void cmd_train(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"ssm", "scenario", "inv_r2_db", "nu_db", "dataset", "dataset_dir", "net", "train", "diffusion", "rate_hz",
                   "seed"},
               "train");
    const std::uint64_t seed = seed_of(c, j);
    const fs::path out(c.out);
    fs::create_directories(out);

    Dataset ds;
    std::function<Vec(const Vec&)> f;
    if (j.contains("dataset_dir")) {
        ds = load_dataset(resolve(c, j.at("dataset_dir").get<std::string>()));
        const SsmSpec ssm = ds.manifest.ssm ? *ds.manifest.ssm : fit_nclt_model(ds, get_or(j, "rate_hz", 5.0));
        f = [t = ssm.transition](const Vec& x) { return propagate(t, x); };
    } else {
        const SsmSpec ssm = ssm_from_config(j);
        const DatasetConfig dc = j.contains("dataset") ? dataset_config_from_json(j.at("dataset")) : DatasetConfig{};
        ds = build_lorenz_dataset(ssm, dc, seed);
        save_dataset(out / "dataset", ds);
        f = [t = ssm.transition](const Vec& x) { return propagate(t, x); };
    }

    NetConfig net = j.contains("net") ? net_config_from_json(j.at("net")) : NetConfig{};
    const TrainConfig tc = j.contains("train") ? train_config_from_json(j.at("train")) : TrainConfig{};
    const Json diff = get_or<Json>(j, "diffusion", Json::object());
    check_keys(diff, {"steps", "schedule"}, "diffusion");
    const auto sched = build_schedule(get_or(diff, "steps", 50),
                                      schedule_kind_from_string(get_or<std::string>(diff, "schedule", "cosine")));

    Rng rng = make_rng(seed, 0x7a11);
    TrainOptions opts;
    opts.checkpoint_path = out / "checkpoint.bin";
    opts.on_epoch = [](int epoch, double loss) { std::cerr << "epoch " << epoch << " loss " << loss << '\n'; };
    const TrainResult r = train(ds.train, ds.manifest.normalizer, net, tc, sched, f, {}, rng, opts);
    write_loss_history(out / "loss_history.txt", r.loss_history);
    save_checkpoint(out / "checkpoint.bin",
                    TrackDiffuserModel{net, r.params, ds.manifest.normalizer, sched.steps, sched.kind});
    write_json(out / "train_config.json",
               Json{{"net", to_json(net)}, {"train", to_json(tc)}, {"seed", seed},
                    {"parameter_count", parameter_count(net)},
                    {"diffusion", {{"steps", sched.steps}, {"schedule", to_string(sched.kind)}}}});
}

void cmd_filter(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"ssm", "scenario", "inv_r2_db", "nu_db", "filter", "filter_config", "guidance", "checkpoint",
                   "input", "n_trajectories", "horizon", "seed"},
               "filter");
    const SsmSpec ssm = ssm_from_config(j);
    const std::uint64_t seed = seed_of(c, j);
    const FilterKind kind = filter_kind_from_string(get_or<std::string>(j, "filter", "ekf"));
    const FilterConfig fc = j.contains("filter_config") ? filter_config_from_json(j.at("filter_config")) : FilterConfig{};
    const GuidanceConfig gc = j.contains("guidance") ? guidance_from_json(j.at("guidance")) : GuidanceConfig{};

    std::vector<TrajectoryRecord> recs;
    if (j.contains("input")) {
        recs = read_trajectories_file(resolve(c, j.at("input").get<std::string>()));
    } else {
        for (auto& t : make_test_set(ssm, get_or(j, "n_trajectories", 10), get_or(j, "horizon", 100), seed))
            recs.push_back({recs.size(), std::move(t), {}});
    }

    std::optional<TrackDiffuserModel> model;
    if (kind == FilterKind::trackdiffuser) {
        if (!j.contains("checkpoint")) throw Error("filter: trackdiffuser needs a checkpoint");
        model = load_checkpoint(resolve(c, j.at("checkpoint").get<std::string>()));
    }
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const Trajectory& tr = recs[i].trajectory;
        Rng rng = make_rng(seed, i);
        switch (kind) {
        case FilterKind::baseline: recs[i].estimates = tr.measurements; break;
        case FilterKind::ekf: recs[i].estimates = run_filter(ClassicalFilter::ekf, tr.measurements, tr.states[0], ssm, fc, rng); break;
        case FilterKind::ukf: recs[i].estimates = run_filter(ClassicalFilter::ukf, tr.measurements, tr.states[0], ssm, fc, rng); break;
        case FilterKind::pf: recs[i].estimates = run_filter(ClassicalFilter::pf, tr.measurements, tr.states[0], ssm, fc, rng); break;
        case FilterKind::trackdiffuser: {
            const NetworkDenoiser net(model->net, model->params);
            const TrackDiffuser td(net, model->net.horizon, model->net.cond_length,
                                   build_schedule(model->diffusion_steps, model->schedule), gc, model->normalizer,
                                   [t = ssm.transition](const Vec& x) { return propagate(t, x); });
            recs[i].estimates = td.track(tr.measurements, tr.states[0], rng);
            break;
        }
        }
    }
    std::vector<std::vector<Vec>> est, truth;
    for (const auto& r : recs) {
        est.push_back(r.estimates);
        truth.emplace_back(r.trajectory.states.begin() + 1, r.trajectory.states.end());
    }
    fs::create_directories(c.out);
    write_trajectories_file(fs::path(c.out) / "estimates.csv", recs);
    const double db = mse_db(est, truth);
    write_json(fs::path(c.out) / "summary.json", Json{{"filter", to_string(kind)}, {"mse_db", db}, {"trajectories", recs.size()}});
    std::cout << to_string(kind) << " mse_db " << db << '\n';
}

ScenarioConfig scenario_section(const Common& c, const Json& j)
{
    ScenarioConfig sc = j.contains("benchmark") ? scenario_from_json(j.at("benchmark")) : ScenarioConfig{};
    if (c.seed) sc.seed = *c.seed;
    return sc;
}

void cmd_benchmark(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"benchmark", "models"}, "benchmark");
    const ScenarioConfig sc = scenario_section(c, j);
    const MseReport report = run_benchmark(sc, models_from_config(c, j));
    emit_report(report, c.out, "benchmark", true, true);
    write_json(fs::path(c.out) / "config.json", Json{{"benchmark", to_json(sc)}});
}

void cmd_mismatch(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"benchmark", "models", "suite"}, "mismatch");
    const ScenarioConfig sc = scenario_section(c, j);
    const MismatchKind kind = mismatch_kind_from_string(get_or<std::string>(j, "suite", "dynamics_J2"));
    const MseReport report = run_mismatch_suite(kind, sc, models_from_config(c, j));
    emit_report(report, c.out, to_string(kind), true, true);
    write_json(fs::path(c.out) / "config.json", Json{{"benchmark", to_json(sc)}, {"suite", to_string(kind)}});
}

void cmd_nclt_prepare(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"nclt", "ground_truth", "odometry", "seed"}, "nclt-prepare");
    const NcltConfig nc = j.contains("nclt") ? nclt_config_from_json(j.at("nclt")) : NcltConfig{};
    if (!j.contains("ground_truth") || !j.contains("odometry"))
        throw Error("nclt-prepare: ground_truth and odometry paths are required");
    const Dataset ds = nclt_ingest(resolve(c, j.at("ground_truth").get<std::string>()),
                                   resolve(c, j.at("odometry").get<std::string>()), nc, seed_of(c, j));
    save_dataset(c.out, ds);
}

void cmd_nclt_eval(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"nclt", "dataset_dir", "filters", "checkpoint", "guidance", "seed"}, "nclt-eval");
    const NcltConfig nc = j.contains("nclt") ? nclt_config_from_json(j.at("nclt")) : NcltConfig{};
    if (!j.contains("dataset_dir")) throw Error("nclt-eval: dataset_dir is required");
    const Dataset ds = load_dataset(resolve(c, j.at("dataset_dir").get<std::string>()));
    std::vector<FilterKind> filters;
    for (const auto& n : get_or<std::vector<std::string>>(j, "filters", {"baseline", "ekf"}))
        filters.push_back(filter_kind_from_string(n));
    std::optional<TrackDiffuserModel> model;
    if (j.contains("checkpoint")) model = load_checkpoint(resolve(c, j.at("checkpoint").get<std::string>()));
    const GuidanceConfig gc = j.contains("guidance") ? guidance_from_json(j.at("guidance")) : GuidanceConfig{};
    const MseReport report = run_nclt(ds, nc, filters, model ? &*model : nullptr, gc, seed_of(c, j));
    emit_report(report, c.out, "nclt", true, true);
}

void cmd_report(const Common& c)
{
    const Json j = read_json_file(c.config);
    check_keys(j, {"input", "formats", "stem"}, "report");
    if (!j.contains("input")) throw Error("report: input is required");
    const MseReport report = read_report_csv_file(resolve(c, j.at("input").get<std::string>()));
    const auto formats = get_or<std::vector<std::string>>(j, "formats", {"csv", "svg"});
    const auto has = [&](const char* f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
    emit_report(report, c.out, get_or<std::string>(j, "stem", "report"), has("csv"), has("svg"));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Diffusion-based Bayesian filtering toolkit"};
    app.require_subcommand(1);
    Common common;
    std::string active;

    const std::vector<std::pair<std::string, std::function<void(const Common&)>>> commands{
        {"simulate", cmd_simulate},         {"train", cmd_train},           {"filter", cmd_filter},
        {"benchmark", cmd_benchmark},       {"mismatch", cmd_mismatch},     {"nclt-prepare", cmd_nclt_prepare},
        {"nclt-eval", cmd_nclt_eval},       {"report", cmd_report}};
    std::map<std::string, std::function<void(const Common&)>> handlers;
    std::uint64_t seed_value = 0;
    for (const auto& [name, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", common.config, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed_value, "master seed (overrides the config)");
        sub->add_option("--out", common.out, "output directory");
        sub->callback([&, n = name, sub] {
            active = n;
            if (sub->count("--seed")) common.seed = seed_value;
        });
        handlers[name] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        handlers.at(active)(common);
    } catch (const std::exception& e) {
        std::cerr << Json{{"status", "error"}, {"command", active}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
