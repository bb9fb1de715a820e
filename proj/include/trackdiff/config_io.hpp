#pragma once

#include "trackdiff/bench.hpp"
#include "trackdiff/nclt.hpp"
#include "trackdiff/train.hpp"

#include <json.hpp>

#include <filesystem>

namespace trackdiff {

using Json = nlohmann::json;

// Partial objects are accepted when reading: absent keys keep their defaults.
// Unknown keys are rejected so typos surface as errors.

Json to_json(const Mat& m);
Mat mat_from_json(const Json& j);
Json to_json(const Vec& v);
Vec vec_from_json(const Json& j);

Json to_json(const NoiseSpec& n);
NoiseSpec noise_from_json(const Json& j);
Json to_json(const TransitionSpec& t);
TransitionSpec transition_from_json(const Json& j);
Json to_json(const MeasurementSpec& m);
MeasurementSpec measurement_from_json(const Json& j);
Json to_json(const SsmSpec& s);
SsmSpec ssm_from_json(const Json& j);

Json to_json(const LorenzScenario& s);
LorenzScenario lorenz_scenario_from_json(const Json& j);
Json to_json(const FilterConfig& c);
FilterConfig filter_config_from_json(const Json& j);
Json to_json(const NetConfig& c);
NetConfig net_config_from_json(const Json& j);
Json to_json(const GuidanceConfig& c);
GuidanceConfig guidance_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);
Json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const Json& j);
Json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_from_json(const Json& j);
Json to_json(const NcltConfig& c);
NcltConfig nclt_config_from_json(const Json& j);
Json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const Json& j);

/// "exact" or a positive integer.
std::string taylor_order_string(const std::optional<int>& order);
std::optional<int> taylor_order_from_string(const std::string& s);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace trackdiff
