#include "trackdiff/dataset.hpp"

#include "trackdiff/config_io.hpp"
#include "trackdiff/trajectory_io.hpp"

#include <cmath>
#include <numeric>

namespace trackdiff {

std::vector<Sample> window_trajectory(const Trajectory& traj, std::size_t trajectory_index, int horizon,
                                      int cond_length, int stride, const std::string& scenario_id)
{
    if (stride < 1) throw Error("dataset: stride must be >= 1");
    std::vector<Sample> out;
    const std::size_t T = traj.horizon();
    for (std::size_t t = 1; t <= T; t += static_cast<std::size_t>(stride)) {
        const auto first = traj.measurements.begin();
        const std::vector<Vec> past(first, first + static_cast<long>(t - 1));
        const std::vector<Vec> seen(first, first + static_cast<long>(t));
        Sample s;
        s.tau0 = assemble_trajectory(past, traj.states[t], horizon);
        s.cond = condition_window(seen, cond_length);
        s.trajectory = trajectory_index;
        s.time = t;
        s.scenario_id = scenario_id;
        out.push_back(std::move(s));
    }
    return out;
}

void SplitRatios::validate() const
{
    if (train < 0.0 || val < 0.0 || test < 0.0) throw Error("split ratios must be non-negative");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed, 0x5be1u);
    shuffle_in_place(idx, rng);
    return idx;
}

SplitIndices take(const std::vector<std::size_t>& order, std::size_t a, std::size_t b, std::size_t c)
{
    SplitIndices s;
    auto it = order.begin();
    s.train.assign(it, it + static_cast<long>(a));
    it += static_cast<long>(a);
    s.val.assign(it, it + static_cast<long>(b));
    it += static_cast<long>(b);
    s.test.assign(it, it + static_cast<long>(c));
    it += static_cast<long>(c);
    s.unused.assign(it, order.end());
    return s;
}

} // namespace

SplitIndices split_indices(std::size_t n, const SplitRatios& ratios, std::uint64_t seed)
{
    ratios.validate();
    if (n == 0) throw Error("empty split: no items");
    const auto count = [&](double r) { return static_cast<std::size_t>(std::llround(r * static_cast<double>(n))); };
    const std::size_t val = std::min(count(ratios.val), n);
    const std::size_t test = std::min(count(ratios.test), n - val);
    const std::size_t train = n - val - test;
    if ((ratios.train > 0.0 && train == 0) || (ratios.val > 0.0 && val == 0) || (ratios.test > 0.0 && test == 0))
        throw Error("empty split: too few items for the requested ratios");
    return take(shuffled(n, seed), train, val, test);
}

SplitIndices split_fixed(std::size_t n, std::size_t train, std::size_t val, std::size_t test, std::uint64_t seed)
{
    if (train + val + test > n) throw Error("split: requested counts exceed the item count");
    if (train == 0) throw Error("empty split: train");
    return take(shuffled(n, seed), train, val, test);
}

Normalizer fit_normalizer(const std::vector<Sample>& samples)
{
    if (samples.empty()) throw Error("normalizer: no samples");
    const Eigen::Index n = samples.front().tau0.slots.cols();
    Vec sum = Vec::Zero(n);
    double count = 0.0;
    for (const Sample& s : samples)
        for (Eigen::Index l = 0; l < s.tau0.horizon(); ++l)
            if (s.tau0.mask[l] != 0.0) {
                sum += s.tau0.slots.row(l).transpose();
                count += 1.0;
            }
    const Vec mean = sum / count;
    Vec sq = Vec::Zero(n);
    for (const Sample& s : samples)
        for (Eigen::Index l = 0; l < s.tau0.horizon(); ++l)
            if (s.tau0.mask[l] != 0.0) sq += (s.tau0.slots.row(l).transpose() - mean).array().square().matrix();
    Vec sd = (sq / count).array().sqrt().matrix();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(sd[i] > 1e-12)) sd[i] = 1.0; // constant channel: leave unscaled
    return Normalizer{mean, sd};
}

void DatasetConfig::validate() const
{
    if (n_trajectories == 0) throw Error("dataset: need at least one trajectory");
    if (trajectory_length < cond_length) throw Error("dataset: T must be >= L");
    if (horizon < cond_length || cond_length < 1) throw Error("dataset: need H >= L >= 1");
    if (stride < 1) throw Error("dataset: stride must be >= 1");
    ratios.validate();
}

bool DatasetManifest::operator==(const DatasetManifest& o) const
{
    // Compare through the serialised form, which is the round-trip contract.
    return manifest_to_json(*this) == manifest_to_json(o);
}

Dataset assemble_dataset(std::vector<Trajectory> trajectories, const SplitIndices& split, const DatasetConfig& cfg,
                         std::uint64_t seed, const std::string& scenario_id)
{
    Dataset ds;
    ds.trajectories = std::move(trajectories);
    const auto fill = [&](const std::vector<std::size_t>& ids, std::vector<Sample>& out) {
        for (std::size_t id : ids) {
            auto s = window_trajectory(ds.trajectories.at(id), id, cfg.horizon, cfg.cond_length, cfg.stride,
                                       scenario_id);
            out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
        }
    };
    fill(split.train, ds.train);
    fill(split.val, ds.val);
    fill(split.test, ds.test);
    if (ds.train.empty()) throw Error("empty split: train");

    DatasetManifest& m = ds.manifest;
    m.scenario_id = scenario_id;
    m.seed = seed;
    m.trajectory_length = cfg.trajectory_length;
    m.horizon = cfg.horizon;
    m.cond_length = cfg.cond_length;
    m.stride = cfg.stride;
    m.train_samples = ds.train.size();
    m.val_samples = ds.val.size();
    m.test_samples = ds.test.size();
    m.trajectories = split;
    m.normalizer = fit_normalizer(ds.train);
    return ds;
}

Dataset build_lorenz_dataset(const SsmSpec& ssm, const DatasetConfig& cfg, std::uint64_t seed,
                             const std::string& scenario_id)
{
    cfg.validate();
    ssm.validate();
    std::vector<Trajectory> trajs(cfg.n_trajectories);
    for (std::size_t i = 0; i < cfg.n_trajectories; ++i) {
        Rng rng = make_rng(seed, i);
        const Vec x0 = lorenz_initial_state(rng, ssm.transition.delta);
        trajs[i] = simulate_trajectory(ssm, x0, static_cast<std::size_t>(cfg.trajectory_length), rng);
    }
    const SplitIndices split = split_indices(cfg.n_trajectories, cfg.ratios, seed);
    Dataset ds = assemble_dataset(std::move(trajs), split, cfg, seed, scenario_id);
    ds.manifest.ssm = ssm;
    return ds;
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

std::string manifest_to_json(const DatasetManifest& m)
{
    Json j{{"scenario_id", m.scenario_id},
           {"seed", m.seed},
           {"trajectory_length", m.trajectory_length},
           {"horizon", m.horizon},
           {"cond_length", m.cond_length},
           {"stride", m.stride},
           {"samples", {{"train", m.train_samples}, {"val", m.val_samples}, {"test", m.test_samples}}},
           {"trajectories",
            {{"train", m.trajectories.train},
             {"val", m.trajectories.val},
             {"test", m.trajectories.test},
             {"unused", m.trajectories.unused}}},
           {"normalizer", to_json(m.normalizer)},
           {"notes", m.notes}};
    j["ssm"] = m.ssm ? to_json(*m.ssm) : Json(nullptr);
    return j.dump(2);
}

DatasetManifest manifest_from_json(const std::string& text)
{
    DatasetManifest m;
    try {
        const Json j = Json::parse(text);
        m.scenario_id = j.at("scenario_id").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.trajectory_length = j.at("trajectory_length").get<int>();
        m.horizon = j.at("horizon").get<int>();
        m.cond_length = j.at("cond_length").get<int>();
        m.stride = j.at("stride").get<int>();
        const Json& s = j.at("samples");
        m.train_samples = s.at("train").get<std::size_t>();
        m.val_samples = s.at("val").get<std::size_t>();
        m.test_samples = s.at("test").get<std::size_t>();
        const Json& t = j.at("trajectories");
        m.trajectories.train = t.at("train").get<std::vector<std::size_t>>();
        m.trajectories.val = t.at("val").get<std::vector<std::size_t>>();
        m.trajectories.test = t.at("test").get<std::vector<std::size_t>>();
        m.trajectories.unused = t.at("unused").get<std::vector<std::size_t>>();
        m.normalizer = normalizer_from_json(j.at("normalizer"));
        m.notes = j.at("notes").get<std::vector<std::string>>();
        if (!j.at("ssm").is_null()) m.ssm = ssm_from_json(j.at("ssm"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed manifest: ") + e.what());
    }
    if (m.train_samples == 0) throw Error("malformed manifest: empty train split");
    return m;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds)
{
    std::filesystem::create_directories(dir);
    const auto dump = [&](const std::vector<std::size_t>& ids, const char* name) {
        std::vector<TrajectoryRecord> recs;
        for (std::size_t id : ids) recs.push_back(TrajectoryRecord{id, ds.trajectories.at(id), {}});
        write_trajectories_file(dir / name, recs);
    };
    dump(ds.manifest.trajectories.train, "train.csv");
    dump(ds.manifest.trajectories.val, "val.csv");
    dump(ds.manifest.trajectories.test, "test.csv");
    if (!ds.manifest.trajectories.unused.empty()) dump(ds.manifest.trajectories.unused, "unused.csv");
    write_text_file(dir / "manifest.json", manifest_to_json(ds.manifest));
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    const DatasetManifest m = manifest_from_json(read_text_file(dir / "manifest.json"));
    std::size_t n = 0;
    for (const auto* ids : {&m.trajectories.train, &m.trajectories.val, &m.trajectories.test, &m.trajectories.unused})
        for (std::size_t id : *ids) n = std::max(n, id + 1);
    std::vector<Trajectory> trajs(n);
    const auto load = [&](const std::vector<std::size_t>& ids, const char* name) {
        if (ids.empty()) return;
        for (auto& rec : read_trajectories_file(dir / name)) {
            if (rec.id >= n) throw Error("malformed dataset: trajectory id out of range");
            trajs[rec.id] = std::move(rec.trajectory);
        }
    };
    load(m.trajectories.train, "train.csv");
    load(m.trajectories.val, "val.csv");
    load(m.trajectories.test, "test.csv");
    load(m.trajectories.unused, "unused.csv");

    DatasetConfig cfg;
    cfg.trajectory_length = m.trajectory_length;
    cfg.horizon = m.horizon;
    cfg.cond_length = m.cond_length;
    cfg.stride = m.stride;
    Dataset ds = assemble_dataset(std::move(trajs), m.trajectories, cfg, m.seed, m.scenario_id);
    ds.manifest = m;
    return ds;
}

} // namespace trackdiff
