#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "atn/network.hpp"

namespace atn {

/// One set of weights and thresholds for a single decision function.
/// Weights scale the measured features; thresholds are hard gates that
/// veto a move before any score is computed.
struct EvmParams {
    double f_q = 0.0;  ///< weight per queued group at the target
    double f_eb = 0.0; ///< weight per empty berth at the target
    double f_nd = 0.0; ///< weight per unit of normalized inverse distance
    double f_ai = 0.0; ///< weight per unit of demand intensity (1/seconds)
    int t_q = 0;       ///< minimum queued groups at the target
    int t_eb = 0;      ///< minimum empty berths at the target
    int t_ev = 0;      ///< minimum idle empty vehicles at the source
    double t_nd = 0.0; ///< minimum normalized inverse distance (inverse horizon)
    double t_total = std::numeric_limits<double>::infinity(); ///< minimum total score

    /// Parameter set that never moves a vehicle.
    static EvmParams disabled() { return EvmParams{}; }

    /// All weights one, every gate zero: accepts and ranks every pair.
    static EvmParams unit() {
        EvmParams p;
        p.f_q = p.f_eb = p.f_nd = p.f_ai = 1.0;
        p.t_total = 0.0;
        return p;
    }

    void validate() const; // throws InvalidParams
    bool operator==(const EvmParams&) const = default;
};

struct InvalidParams : ValidationError {
    using ValidationError::ValidationError;
};

/// The two structurally identical parameter sets: calling delivers empty
/// vehicles to waiting passengers, balancing redistributes them toward
/// anticipated demand.
struct ControllerParams {
    EvmParams calling;
    EvmParams balancing;

    static ControllerParams disabled() { return {EvmParams::disabled(), EvmParams::disabled()}; }
    static ControllerParams unit() { return {EvmParams::unit(), EvmParams::unit()}; }

    void validate() const;
    bool operator==(const ControllerParams&) const = default;

    /// Flat layout used by files and by the learner: the 9 calling values
    /// followed by the 9 balancing values, field order as declared above.
    std::array<double, 18> to_flat() const;
    /// Inverse of to_flat. Integer thresholds are rounded to the nearest
    /// integer and weights/thresholds clamped non-negative, so cluster
    /// centroids map onto valid parameter sets.
    static ControllerParams from_flat(const std::array<double, 18>& v);
};

/// Snapshot of one node as seen by a decision round.
struct StationView {
    NodeId node = -1;
    NodeKind kind = NodeKind::Station;
    int queue_len = 0;       ///< waiting passenger groups Q
    int empty_berths = 0;    ///< berths neither occupied nor reserved
    int empty_vehicles = 0;  ///< idle empty vehicles in berths
    int inbound_empties = 0; ///< empty vehicles already en route here
    double ai_s = 1e6;       ///< mean group inter-arrival time, seconds
};

enum class MoveKind { Call, Balance };

struct MoveCandidate {
    NodeId source = -1;
    NodeId target = -1;
    double score = 0.0;
    MoveKind kind = MoveKind::Call;

    bool operator==(const MoveCandidate&) const = default;
};

/// Gate that rejected a move, in evaluation order.
enum class Gate {
    None,
    QueueThreshold,
    EmptyBerthThreshold,
    EmptyVehicleThreshold,
    NdThreshold,
    TotalThreshold,
};

struct ScoreOutcome {
    bool accepted = false;
    double score = 0.0;
    Gate gate = Gate::None; ///< set when rejected
};

/// Counters proving that scores are only computed once all gates pass.
struct ScoreStats {
    std::uint64_t calls = 0;
    std::uint64_t gate_rejections = 0;
    std::uint64_t scores_computed = 0;
};

struct InconsistentViews : ValidationError {
    using ValidationError::ValidationError;
};

/// Queue pressure still unanswered at the target: waiting groups minus
/// empty vehicles already heading there, floored at zero.
int effective_queue(const StationView& dst);

/// Evaluates one candidate move src -> dst under one parameter set.
/// Gates run first, in fixed order (queue, empty berths, empty vehicles,
/// distance); only when all pass is the weighted sum computed and compared
/// against the total threshold. A move is rejected when the sum is
/// strictly below t_total.
ScoreOutcome score_move(const EvmParams& p, const NetworkModel& net,
                        const StationView& src, const StationView& dst,
                        ScoreStats* stats = nullptr);

/// One decision round over a snapshot of all nodes. Phase 1 greedily
/// commits calling moves (targets must be stations with unanswered queue);
/// phase 2 commits balancing moves (any pair; a berth is reserved at the
/// target). Each commit updates the working snapshot, so later picks see
/// the consequences of earlier ones. Ties break by shorter distance, then
/// by (source, target) index. Returns candidates in commit order.
std::vector<MoveCandidate> decision_round(const ControllerParams& cp,
                                          const NetworkModel& net,
                                          std::vector<StationView> views);

/// The views a node at `center` can see: every other node j with
/// nd(center, j) >= t_nd. With per-pair gating this is exactly the
/// information a distributed per-station controller would need.
std::vector<StationView> horizon_filter(const std::vector<StationView>& views,
                                        double t_nd, const NetworkModel& net,
                                        NodeId center);

} // namespace atn
