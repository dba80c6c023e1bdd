#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "atn/learner.hpp"
#include "atn/tuner.hpp"

namespace atn {

struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

using json = nlohmann::json;

// --- primitives -----------------------------------------------------------

/// Shortest round-trip decimal representation ("inf" for infinities), used
/// for every floating-point value written to CSV.
std::string format_double(double v);
double parse_double(const std::string& s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);
json parse_json_file(const std::filesystem::path& path);

// --- network / scenario ---------------------------------------------------

json network_to_json(const NetworkModel& net);
NetworkModel network_from_json(const json& j);

json demand_to_json(const DemandSpec& demand);
DemandSpec demand_from_json(const json& j);

json sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const json& j);

/// Scenario file: {"network": {...}, "demand": {...}, "sim": {...}}.
struct ScenarioFile {
    NetworkModel net;
    DemandSpec demand;
    SimConfig sim;
};
ScenarioFile scenario_from_json(const json& j);

// --- controller parameters --------------------------------------------------

/// Flat object with the 18 keys c_f_q .. b_t_total. Infinite totals are
/// written as null and read back from null or "inf".
json params_to_json(const ControllerParams& p);
ControllerParams params_from_json(const json& j);

extern const std::array<const char*, 18> kParamKeys;

// --- environment vectors and tuning batches ---------------------------------

json env_to_json(const EnvVector& env);
EnvVector env_from_json(const json& j);

json od_library_to_json(const std::vector<OdMatrix>& lib);
std::vector<OdMatrix> od_library_from_json(const json& j);

/// Tuning batch file: network and OD library inline or referenced by path
/// (resolved relative to the batch file), probe stations, base simulation
/// settings, and the environment vectors to tune.
struct TuneBatch {
    NetworkModel net;
    std::vector<OdMatrix> od_library;
    std::array<NodeId, 4> probes{};
    SimConfig base_sim;
    std::vector<EnvVector> envs;
};
TuneBatch batch_from_file(const std::filesystem::path& path);

SearchBounds bounds_from_json(const json& j);
json bounds_to_json(const SearchBounds& b);

// --- metrics ----------------------------------------------------------------

json metrics_to_json(const SimMetrics& m);

// --- datasets (CSV) ----------------------------------------------------------

std::string dataset_to_csv(const std::vector<DatasetRow>& rows);
std::vector<DatasetRow> dataset_from_csv(const std::string& text);

std::string labeled_to_csv(const std::vector<LabeledRow>& rows);
std::vector<LabeledRow> labeled_from_csv(const std::string& text);

std::string noise_curve_to_csv(const std::vector<NoisePoint>& points);

// --- learner model -----------------------------------------------------------

json model_to_json(const LearnerModel& model);
LearnerModel model_from_json(const json& j);

} // namespace atn
