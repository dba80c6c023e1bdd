#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <set>
#include <vector>

#include "atn/evm.hpp"
#include "atn/network.hpp"
#include "atn/rng.hpp"

namespace atn {

enum class DemandMode { FiniteDemand, InfiniteQueues };

/// Demand model: Poisson group arrivals per station with destinations
/// drawn from the station's row of the origin-destination matrix. In
/// InfiniteQueues mode every station with a positive rate has an
/// inexhaustible queue instead of a stochastic arrival process.
struct DemandSpec {
    std::vector<double> arrival_rate;            ///< groups per second, per node
    std::vector<std::vector<double>> od_matrix;  ///< row-stochastic, zero diagonal
    DemandMode mode = DemandMode::FiniteDemand;

    void validate(const NetworkModel& net) const; // throws InvalidDemand
};

struct InvalidDemand : ValidationError {
    using ValidationError::ValidationError;
};
struct InvalidConfig : ValidationError {
    using ValidationError::ValidationError;
};
struct FleetExceedsBerths : ValidationError {
    using ValidationError::ValidationError;
};
/// More vehicles placed at a node than it has berths. Reachable only in
/// scenarios whose berth counts are tighter than the fleet; the shipped
/// scenarios size berths so this cannot occur.
struct BerthOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct WindowTooLong : ValidationError {
    using ValidationError::ValidationError;
};

/// Where decision rounds take the per-station demand estimate from.
enum class AiSource { ScenarioPrior, ObservedWindow };

struct SimConfig {
    double horizon = 3600.0;     ///< seconds of simulated time
    double warmup = 0.0;         ///< metrics ignore events at or before this time
    double dwell_time = 10.0;    ///< seconds per boarding or alighting
    double max_velocity = 10.0;  ///< meters/second
    int fleet_size = 1;
    double evm_epoch = 5.0;      ///< seconds between decision rounds
    std::uint64_t seed = 0;

    AiSource ai_source = AiSource::ScenarioPrior;
    double ai_window = 3600.0;  ///< trailing window for ObservedWindow, seconds
    double ai_ceiling = 1e6;    ///< inter-arrival reported for silent stations

    void validate() const; // throws InvalidConfig
};

/// Mean group inter-arrival time per station.
struct DemandHistory {
    enum class Source { ScenarioPrior, ObservedWindow };
    std::vector<double> ai_s;
    Source source = Source::ScenarioPrior;
};

struct SimMetrics {
    int full_trips = 0;   ///< passenger trips completed after warmup
    int empty_trips = 0;  ///< repositioning trips completed after warmup
    double throughput = 0.0; ///< full trips per hour over (warmup, horizon]
    std::optional<double> mean_wait;  ///< seconds; absent when nobody boarded
    std::optional<double> p90_wait;   ///< seconds, nearest-rank percentile
    double empty_distance = 0.0;      ///< meters, completed empty trips
    double full_distance = 0.0;       ///< meters, completed full trips
    int served_groups = 0;            ///< groups delivered to their destination
    int residual_queue = 0;           ///< groups still waiting at the horizon
    /// Mean wait with unserved groups censored at the horizon; the tuning
    /// objective. Absent when no group arrived after warmup.
    std::optional<double> censored_mean_wait;
};

/// Deterministic event-driven engine. One instance runs one scenario;
/// distinct instances may run concurrently.
///
/// Simultaneous events process in a fixed order (arrivals, then vehicle
/// arrivals, then dwell completions, then decision rounds, then insertion
/// order), so two runs with equal inputs and seed produce identical event
/// sequences and bit-identical metrics.
class Simulation {
public:
    Simulation(const NetworkModel& net, DemandSpec demand, SimConfig config,
               ControllerParams controller);

    /// Optional event log: one line per event,
    /// time<TAB>kind<TAB>vehicle<TAB>node_from<TAB>node_to.
    void set_event_log(std::ostream* os) { event_log_ = os; }

    SimMetrics run();

    /// Demand history over the trailing window, available once run()
    /// finished. Stations silent in the window get the configured ceiling.
    DemandHistory observe_history(double window) const;

    /// Prior history straight from the scenario rates: ai = 1/lambda.
    static DemandHistory history_from_prior(const DemandSpec& demand, double ceiling);

    struct GroupRecord {
        NodeId origin = -1;
        NodeId destination = -1;
        double arrival_time = 0.0;
        double board_time = -1.0;  ///< <0 while not boarded
        bool delivered = false;
    };
    struct TripRecord {
        bool full = false;
        NodeId origin = -1;
        NodeId destination = -1;
        double completion_time = 0.0;
        double distance = 0.0;
    };

    const std::vector<GroupRecord>& groups() const { return groups_; }
    const std::vector<TripRecord>& trips() const { return trips_; }

private:
    enum class VehState { Idle, MovingEmpty, MovingFull, Dwelling };

    struct Vehicle {
        VehState state = VehState::Idle;
        NodeId node = -1;        ///< current node (Idle/Dwelling) or trip origin
        NodeId dest = -1;        ///< trip destination while moving
        int group = -1;          ///< boarded/boarding group index
        bool alighting = false;  ///< current dwell is an alight
        bool reserved_berth = false;
        double odometer_empty = 0.0;
        double odometer_full = 0.0;
    };

    struct NodeState {
        std::deque<int> queue;   ///< waiting group indices, FIFO
        std::set<int> idle;      ///< idle vehicle ids, ordered
        int occupancy = 0;       ///< idle + dwelling vehicles
        int reserved = 0;        ///< berths held for inbound balanced vehicles
        int inbound_empty = 0;
        std::vector<double> arrival_log;
    };

    enum EventKind { EvArrival = 0, EvVehicleArrive = 1, EvDwellDone = 2, EvEpoch = 3 };

    struct Event {
        double time;
        int kind;
        std::uint64_t seq;
        int subject; ///< station for arrivals, vehicle id otherwise
        bool operator>(const Event& o) const {
            if (time != o.time) return time > o.time;
            if (kind != o.kind) return kind > o.kind;
            return seq > o.seq;
        }
    };

    void schedule(double time, int kind, int subject);
    void schedule_next_arrival(NodeId s);
    NodeId sample_destination(NodeId origin);
    bool queue_available(NodeId n) const;
    int pop_or_materialize_group(NodeId n, double now);
    void start_boarding(int vehicle, NodeId n, double now);
    void match_idle_vehicles(NodeId n, double now);
    void depart(int vehicle, NodeId from, NodeId to, bool full, double now);

    void handle_arrival(const Event& ev);
    void handle_vehicle_arrive(const Event& ev);
    void handle_dwell_done(const Event& ev);
    void handle_epoch(const Event& ev);

    double demand_estimate_ai(NodeId s, double now) const;
    void log_event(double t, const char* kind, int vehicle, NodeId from, NodeId to);
    void check_invariants() const;
    SimMetrics finalize();

    const NetworkModel& net_;
    DemandSpec demand_;
    SimConfig cfg_;
    ControllerParams controller_;

    std::vector<Vehicle> vehicles_;
    std::vector<NodeState> nodes_;
    std::vector<GroupRecord> groups_;
    std::vector<TripRecord> trips_;
    std::vector<Rng> arrival_rng_;
    std::vector<Rng> od_rng_;

    std::vector<Event> heap_;
    std::uint64_t next_seq_ = 0;
    double now_ = 0.0;
    bool ran_ = false;
    std::ostream* event_log_ = nullptr;
};

/// Runs one scenario to the horizon and reports metrics.
SimMetrics run_simulation(const NetworkModel& net, const DemandSpec& demand,
                          const SimConfig& config, const ControllerParams& controller);

/// Saturation throughput: the run repeated with inexhaustible queues at
/// every demand-generating station, so each vehicle turnaround immediately
/// picks up a new group. Returns full trips per hour.
double measure_ridership(const NetworkModel& net, const DemandSpec& demand,
                         const SimConfig& config, const ControllerParams& controller);

} // namespace atn
