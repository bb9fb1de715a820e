#pragma once

#include "trackdiff/checkpoint.hpp"
#include "trackdiff/filters.hpp"

#include <map>
#include <memory>

namespace trackdiff {

/// 10 log10 of the mean squared error over trajectories, steps and
/// dimensions. An exactly zero error maps to kMseFloorDb.
inline constexpr double kMseFloorDb = -300.0;

double mse_db(const std::vector<std::vector<Vec>>& estimates, const std::vector<std::vector<Vec>>& truths);
double mse_linear(const std::vector<std::vector<Vec>>& estimates, const std::vector<std::vector<Vec>>& truths);

enum class FilterKind { ekf, ukf, pf, trackdiffuser, baseline };

std::string to_string(FilterKind kind);
FilterKind filter_kind_from_string(const std::string& s);

/// Filters linearise a 5-term Taylor truncation of the transition by default.
inline LorenzScenario default_filter_model()
{
    LorenzScenario s;
    s.taylor_order = 5;
    return s;
}

struct ScenarioConfig {
    std::string name = "lorenz";
    LorenzScenario truth;            // data generation
    LorenzScenario model = default_filter_model(); // what the filters are told
    std::vector<double> grid_db{-10.0, 0.0, 10.0, 20.0, 30.0}; // 1/r^2 [dB]
    double nu_db = -20.0;
    int horizon = 100;
    int n_test_trajectories = 200;
    /// Trajectories evaluated by TrackDiffuser cells; 0 means all of them.
    int trackdiffuser_trajectories = 0;
    std::vector<FilterKind> filters{FilterKind::baseline, FilterKind::ekf};
    FilterConfig filter;
    GuidanceConfig guidance;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const;
};

/// Full configuration behind one report cell.
struct ConfigEcho {
    std::string truth_measurement;
    double truth_theta_deg = 0.0;
    std::string truth_noise;
    std::string truth_J = "exact";
    std::string model_measurement;
    double model_theta_deg = 0.0;
    std::string model_noise;
    std::string model_J = "exact";
    double mix_weight = 0.8;
    double mix_scale = 10.0;
    double delta = 0.02;
    double nu_db = -20.0;
    int horizon = 0;
    int n_test_trajectories = 0;
    int trackdiffuser_trajectories = 0;
    int K = 0;
    std::string schedule = "-";
    double omega = 0.0;
    int L = 0;
    double temp_scale = 0.0;
    std::string predict_shift = "-";
    double ukf_alpha = 0.0;
    double ukf_beta = 0.0;
    double ukf_kappa = 0.0;
    int pf_particles = 0;
    double pf_ess_fraction = 0.0;
    double init_cov = 0.0;
    std::uint64_t seed = 0;
    std::string model_digest = "-";

    bool operator==(const ConfigEcho&) const = default;
};

struct ReportCell {
    std::string suite = "benchmark";
    std::string scenario;
    std::string variant = "default"; // matched / mismatched in suites
    std::string filter;
    double inv_r2_db = 0.0;
    double mse_db = 0.0;            // NaN when the cell failed
    double degradation_db = 0.0;    // mismatched minus matched; NaN when not applicable
    int trajectories = 0;
    std::string status = "ok";
    ConfigEcho echo;

    bool operator==(const ReportCell& other) const;
};

struct MseReport {
    std::vector<ReportCell> cells;

    const ReportCell* find(const std::string& filter, double inv_r2_db, const std::string& variant = "default") const;
};

/// Trained TrackDiffuser models addressed by (variant, 1/r^2 dB). Lookup
/// falls back to the "default" variant.
class ModelTable {
public:
    void add(const std::string& variant, double inv_r2_db, std::shared_ptr<const TrackDiffuserModel> model);
    std::shared_ptr<const TrackDiffuserModel> find(const std::string& variant, double inv_r2_db) const;
    bool empty() const { return models_.empty(); }

private:
    std::map<std::pair<std::string, double>, std::shared_ptr<const TrackDiffuserModel>> models_;
};

/// Test trajectories for one grid point; the seed depends only on the
/// scenario seed and the grid index so every filter sees the same data.
std::vector<Trajectory> make_test_set(const SsmSpec& truth, int count, int horizon, std::uint64_t seed);

/// Runs every requested filter on one test set and returns one cell per filter.
std::vector<ReportCell> evaluate_cells(const ScenarioConfig& sc, const SsmSpec& model_ssm,
                                       const std::vector<Trajectory>& data, double inv_r2_db,
                                       const std::string& variant, const ModelTable& models,
                                       std::uint64_t filter_seed);

MseReport run_benchmark(const ScenarioConfig& sc, const ModelTable& models = {});

enum class MismatchKind { dynamics_J2, rotation_1deg, train_test_J };

std::string to_string(MismatchKind kind);
MismatchKind mismatch_kind_from_string(const std::string& s);

/// Paired matched/mismatched runs on identical test data. For train_test_J the
/// grid is fixed at 20 dB and the filters are evaluated with J = 1..5. Models
/// for the rotation suite are looked up under the "matched" and "mismatched"
/// variants (a TrackDiffuser learns the measurement map from data, so the
/// mismatched model is the one trained on the rotated system).
MseReport run_mismatch_suite(MismatchKind kind, const ScenarioConfig& base, const ModelTable& models = {});

/// Rebuilds the scenario behind a report from its echo columns.
ScenarioConfig scenario_from_report(const MseReport& report);

} // namespace trackdiff
