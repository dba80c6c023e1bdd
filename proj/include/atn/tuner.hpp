#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "atn/simulator.hpp"

namespace atn {

struct InvalidEnv : ValidationError {
    using ValidationError::ValidationError;
};
struct EmptyBounds : ValidationError {
    using ValidationError::ValidationError;
};

/// The 11 operating-condition values describing one scenario: fleet size,
/// speed limit, total demand, demand at the four probe stations, and a
/// one-hot selector over the four origin-destination structures.
struct EnvVector {
    double fleet_size = 1.0;
    double max_velocity = 10.0;
    double total_demand = 0.0;                    ///< groups per hour
    std::array<double, 4> station_demand{};       ///< groups per hour at the probes
    std::array<double, 4> od_structure{1, 0, 0, 0};

    static constexpr int kDims = 11;

    std::array<double, kDims> flat() const;
    static EnvVector from_flat(const std::array<double, kDims>& v);

    /// Index of the selected OD structure.
    int od_index() const;
    void validate() const; // throws InvalidEnv
};

using OdMatrix = std::vector<std::vector<double>>;

/// A concrete runnable scenario realized from an environment vector.
struct Scenario {
    int id = 0;
    EnvVector env;
    const NetworkModel* net = nullptr;
    DemandSpec demand;
    SimConfig sim;
};

/// Instantiates demand and simulation settings from an environment vector.
/// Probe stations get their stated rates; the remaining demand spreads
/// uniformly over the other stations.
Scenario realize_scenario(const EnvVector& env, const NetworkModel& net,
                          const SimConfig& base, const std::vector<OdMatrix>& od_library,
                          const std::array<NodeId, 4>& probes, std::uint64_t seed, int id = 0);

/// Tuning objective: mean passenger wait with unserved groups censored at
/// the horizon, averaged over `replications` runs on derived seeds. Lower
/// is better.
double evaluate(const Scenario& scenario, const ControllerParams& params, int replications);

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sampling ranges for one 9-value parameter set. Count thresholds sample
/// on the integer grid.
struct HalfBounds {
    ParamRange f_q{0, 10}, f_eb{0, 10}, f_nd{0, 10}, f_ai{0, 10};
    std::pair<int, int> t_q{0, 5}, t_eb{0, 5}, t_ev{0, 5};
    ParamRange t_nd{0, 3};
    ParamRange t_total{0, 50};

    void validate() const; // throws EmptyBounds
    EvmParams sample(Rng& rng) const;
    EvmParams clamp(const EvmParams& p) const;
};

struct SearchBounds {
    HalfBounds calling;
    HalfBounds balancing;

    static SearchBounds defaults() { return {}; }
    void validate() const;
};

struct TuneResult {
    int scenario_id = 0;
    ControllerParams best_params;
    double objective = 0.0;          ///< seconds
    int evals = 0;                   ///< candidate evaluations spent
    double baseline_objective = 0.0; ///< objective with the controller disabled
    /// Incumbent objective after each refinement round (alternating_refine).
    std::vector<double> round_objectives;
    /// Incumbent parameters after each refinement round.
    std::vector<ControllerParams> round_incumbents;
};

/// Uniform random search over the bounds. Candidate 0 is always the
/// disabled controller (the baseline), candidate 1 the unit-weight
/// zero-gate set clamped into the bounds; the rest are uniform samples.
/// Deterministic given the seed, for any job count.
TuneResult random_search(const Scenario& scenario, int budget, const SearchBounds& bounds,
                         std::uint64_t seed, int replications = 1, int jobs = 1);

/// Coordinate-alternating refinement: odd rounds resample only the calling
/// set, even rounds only the balancing set; the frozen half stays
/// bit-identical. The incumbent enters every round's candidate pool and is
/// replaced only on strict improvement, so the objective sequence never
/// increases. Pass a known baseline objective to avoid re-measuring the
/// disabled controller (NaN means "measure it here", costing one eval).
TuneResult alternating_refine(const Scenario& scenario, const ControllerParams& start,
                              int rounds, int per_round_budget, const SearchBounds& bounds,
                              std::uint64_t seed, int replications = 1, int jobs = 1,
                              double baseline_objective =
                                  std::numeric_limits<double>::quiet_NaN());

struct SearchSettings {
    int budget = 200;      ///< candidate evaluations per search stage
    int rounds = 4;        ///< alternating refinement rounds
    int replications = 3;  ///< simulations averaged per evaluation
    SearchBounds bounds;
    std::uint64_t seed = 0;
    int jobs = 1;
    /// Called after each finished scenario with (scenario_id, result).
    void (*progress)(int, const TuneResult&) = nullptr;
};

struct DatasetRow {
    int scenario_id = 0;
    std::array<double, EnvVector::kDims> env{};
    std::array<double, 18> params{};
    double objective = 0.0;
    double baseline = 0.0;
};

/// Tunes every scenario (random search, then alternating refinement) and
/// emits one labeled row per scenario, ordered by scenario id regardless
/// of how evaluations were scheduled.
std::vector<DatasetRow> build_dataset(const std::vector<Scenario>& scenarios,
                                      const SearchSettings& settings);

/// The four origin-destination structures shipped with the simulator:
/// uniform, hub-and-spoke around `hub`, two-cluster commuter exchange, and
/// ring-following with geometric decay. Rows cover stations only;
/// capacitor rows are zero.
std::vector<OdMatrix> builtin_od_structures(const NetworkModel& net, NodeId hub);

} // namespace atn
