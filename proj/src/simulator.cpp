#include "atn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace atn {

namespace {

// Queue length reported for an inexhaustible station. Large enough to pass
// any queue gate while keeping scores finite.
constexpr int kInfiniteQueueLen = 1'000'000;

std::string station_label(const NetworkModel& net, NodeId id) {
    const Node& n = net.node(id);
    std::string s = "station " + std::to_string(id);
    if (!n.name.empty()) s += " (\"" + n.name + "\")";
    return s;
}

} // namespace

void DemandSpec::validate(const NetworkModel& net) const {
    const std::size_t n = static_cast<std::size_t>(net.node_count());
    if (arrival_rate.size() != n)
        throw InvalidDemand("arrival_rate has " + std::to_string(arrival_rate.size()) +
                            " entries for " + std::to_string(n) + " nodes");
    if (od_matrix.size() != n) throw InvalidDemand("od_matrix must have one row per node");

    for (std::size_t i = 0; i < n; ++i) {
        const Node& node = net.node(static_cast<NodeId>(i));
        const double rate = arrival_rate[i];
        if (!(rate >= 0.0) || !std::isfinite(rate))
            throw InvalidDemand("arrival rate of " + station_label(net, node.id) +
                                " must be finite and >= 0");
        const auto& row = od_matrix[i];
        if (row.size() != n)
            throw InvalidDemand("od_matrix row of " + station_label(net, node.id) +
                                " has wrong length");
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(row[j] >= 0.0))
                throw InvalidDemand("od_matrix row of " + station_label(net, node.id) +
                                    " has a negative entry");
            sum += row[j];
        }
        if (row[i] != 0.0)
            throw InvalidDemand("od_matrix row of " + station_label(net, node.id) +
                                " has a nonzero diagonal");
        if (node.kind == NodeKind::Capacitor) {
            if (rate != 0.0 || sum != 0.0)
                throw InvalidDemand("capacitor " + station_label(net, node.id) +
                                    " must have zero demand");
        } else if (std::abs(sum - 1.0) > 1e-9) {
            // A silent station may carry an all-zero row; it is never sampled.
            if (!(sum == 0.0 && rate == 0.0)) {
                std::ostringstream os;
                os << "od_matrix row of " << station_label(net, node.id) << " sums to " << sum
                   << ", expected 1";
                throw InvalidDemand(os.str());
            }
        }
    }
}

void SimConfig::validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidConfig("horizon must be > 0");
    if (!(warmup >= 0.0) || warmup >= horizon) throw InvalidConfig("warmup must satisfy 0 <= warmup < horizon");
    if (!(dwell_time >= 0.0)) throw InvalidConfig("dwell_time must be >= 0");
    if (!(max_velocity > 0.0)) throw InvalidConfig("max_velocity must be > 0");
    if (fleet_size < 1) throw InvalidConfig("fleet_size must be >= 1");
    if (!(evm_epoch > 0.0)) throw InvalidConfig("evm_epoch must be > 0");
    if (!(ai_window > 0.0)) throw InvalidConfig("ai_window must be > 0");
    if (!(ai_ceiling > 0.0)) throw InvalidConfig("ai_ceiling must be > 0");
}

Simulation::Simulation(const NetworkModel& net, DemandSpec demand, SimConfig config,
                       ControllerParams controller)
    : net_(net), demand_(std::move(demand)), cfg_(config), controller_(controller) {
    cfg_.validate();
    demand_.validate(net_);
    controller_.validate();
    if (cfg_.fleet_size > net_.total_berths())
        throw FleetExceedsBerths("fleet of " + std::to_string(cfg_.fleet_size) +
                                 " exceeds " + std::to_string(net_.total_berths()) + " berths");
    nodes_.resize(static_cast<std::size_t>(net_.node_count()));
    for (NodeId s = 0; s < net_.node_count(); ++s) {
        arrival_rng_.emplace_back(derive_seed(cfg_.seed, "arrivals", static_cast<std::uint64_t>(s)));
        od_rng_.emplace_back(derive_seed(cfg_.seed, "od", static_cast<std::uint64_t>(s)));
    }
}

void Simulation::schedule(double time, int kind, int subject) {
    if (time > cfg_.horizon) return;
    heap_.push_back(Event{time, kind, next_seq_++, subject});
    std::push_heap(heap_.begin(), heap_.end(), [](const Event& a, const Event& b) { return a > b; });
}

void Simulation::schedule_next_arrival(NodeId s) {
    const double rate = demand_.arrival_rate[static_cast<std::size_t>(s)];
    if (rate <= 0.0) return;
    const double dt = arrival_rng_[static_cast<std::size_t>(s)].exponential(rate);
    schedule(now_ + dt, EvArrival, s);
}

NodeId Simulation::sample_destination(NodeId origin) {
    const auto& row = demand_.od_matrix[static_cast<std::size_t>(origin)];
    return od_rng_[static_cast<std::size_t>(origin)].weighted_index(row);
}

bool Simulation::queue_available(NodeId n) const {
    if (demand_.mode == DemandMode::InfiniteQueues)
        return demand_.arrival_rate[static_cast<std::size_t>(n)] > 0.0;
    return !nodes_[static_cast<std::size_t>(n)].queue.empty();
}

int Simulation::pop_or_materialize_group(NodeId n, double now) {
    NodeState& ns = nodes_[static_cast<std::size_t>(n)];
    if (demand_.mode == DemandMode::FiniteDemand) {
        const int g = ns.queue.front();
        ns.queue.pop_front();
        return g;
    }
    // Inexhaustible queue: the head group appears the moment a vehicle is
    // ready for it, so it boards with zero wait.
    GroupRecord g;
    g.origin = n;
    g.destination = sample_destination(n);
    g.arrival_time = now + cfg_.dwell_time;
    groups_.push_back(g);
    return static_cast<int>(groups_.size()) - 1;
}

void Simulation::start_boarding(int vehicle, NodeId n, double now) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(vehicle)];
    v.state = VehState::Dwelling;
    v.alighting = false;
    v.group = pop_or_materialize_group(n, now);
    schedule(now + cfg_.dwell_time, EvDwellDone, vehicle);
}

void Simulation::match_idle_vehicles(NodeId n, double now) {
    NodeState& ns = nodes_[static_cast<std::size_t>(n)];
    while (queue_available(n) && !ns.idle.empty()) {
        const int v = *ns.idle.begin();
        ns.idle.erase(ns.idle.begin());
        start_boarding(v, n, now);
    }
}

void Simulation::handle_arrival(const Event& ev) {
    const NodeId s = ev.subject;
    NodeState& ns = nodes_[static_cast<std::size_t>(s)];
    GroupRecord g;
    g.origin = s;
    g.destination = sample_destination(s);
    g.arrival_time = ev.time;
    groups_.push_back(g);
    ns.queue.push_back(static_cast<int>(groups_.size()) - 1);
    ns.arrival_log.push_back(ev.time);
    log_event(ev.time, "arrival", -1, s, g.destination);
    match_idle_vehicles(s, ev.time);
    schedule_next_arrival(s);
}

void Simulation::depart(int vehicle, NodeId from, NodeId to, bool full, double now) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(vehicle)];
    nodes_[static_cast<std::size_t>(from)].occupancy -= 1;
    v.state = full ? VehState::MovingFull : VehState::MovingEmpty;
    v.node = from;
    v.dest = to;
    if (!full) nodes_[static_cast<std::size_t>(to)].inbound_empty += 1;
    schedule(now + net_.dist(from, to) / cfg_.max_velocity, EvVehicleArrive, vehicle);
}

void Simulation::handle_vehicle_arrive(const Event& ev) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(ev.subject)];
    const NodeId origin = v.node;
    const NodeId n = v.dest;
    const bool was_full = v.state == VehState::MovingFull;
    const double d = net_.dist(origin, n);
    NodeState& ns = nodes_[static_cast<std::size_t>(n)];

    if (was_full) {
        v.odometer_full += d;
        groups_[static_cast<std::size_t>(v.group)].delivered = true;
        v.group = -1;
    } else {
        v.odometer_empty += d;
        ns.inbound_empty -= 1;
        if (v.reserved_berth) {
            ns.reserved -= 1;
            v.reserved_berth = false;
        }
    }
    trips_.push_back(TripRecord{was_full, origin, n, ev.time, d});

    v.node = n;
    v.dest = -1;
    ns.occupancy += 1;
    if (ns.occupancy + ns.reserved > net_.node(n).berth_count) {
        std::ostringstream os;
        os << "berth overflow at node " << n << " at t=" << ev.time << ": occupancy "
           << ns.occupancy << " + reserved " << ns.reserved << " > " << net_.node(n).berth_count;
        throw BerthOverflow(os.str());
    }

    if (was_full) {
        v.state = VehState::Dwelling;
        v.alighting = true;
        schedule(ev.time + cfg_.dwell_time, EvDwellDone, ev.subject);
    } else if (queue_available(n)) {
        start_boarding(ev.subject, n, ev.time);
    } else {
        v.state = VehState::Idle;
        ns.idle.insert(ev.subject);
    }
    log_event(ev.time, "veh_arrive", ev.subject, origin, n);
}

void Simulation::handle_dwell_done(const Event& ev) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(ev.subject)];
    const NodeId n = v.node;
    if (v.alighting) {
        v.alighting = false;
        if (queue_available(n)) {
            start_boarding(ev.subject, n, ev.time);
        } else {
            v.state = VehState::Idle;
            nodes_[static_cast<std::size_t>(n)].idle.insert(ev.subject);
        }
    } else {
        GroupRecord& g = groups_[static_cast<std::size_t>(v.group)];
        g.board_time = ev.time;
        depart(ev.subject, n, g.destination, true, ev.time);
    }
    log_event(ev.time, "dwell_done", ev.subject, n, -1);
}

double Simulation::demand_estimate_ai(NodeId s, double now) const {
    if (cfg_.ai_source == AiSource::ScenarioPrior) {
        const double rate = demand_.arrival_rate[static_cast<std::size_t>(s)];
        if (rate <= 0.0) return cfg_.ai_ceiling;
        return std::min(1.0 / rate, cfg_.ai_ceiling);
    }
    const double w = std::min(cfg_.ai_window, now);
    if (w <= 0.0) return cfg_.ai_ceiling;
    const auto& log = nodes_[static_cast<std::size_t>(s)].arrival_log;
    const auto first = std::upper_bound(log.begin(), log.end(), now - w);
    const auto count = static_cast<double>(log.end() - first);
    if (count <= 0.0) return cfg_.ai_ceiling;
    return std::min(w / count, cfg_.ai_ceiling);
}

void Simulation::handle_epoch(const Event& ev) {
    std::vector<StationView> views;
    views.reserve(nodes_.size());
    for (NodeId i = 0; i < net_.node_count(); ++i) {
        const NodeState& ns = nodes_[static_cast<std::size_t>(i)];
        StationView sv;
        sv.node = i;
        sv.kind = net_.node(i).kind;
        if (demand_.mode == DemandMode::InfiniteQueues)
            sv.queue_len = demand_.arrival_rate[static_cast<std::size_t>(i)] > 0.0 ? kInfiniteQueueLen : 0;
        else
            sv.queue_len = static_cast<int>(ns.queue.size());
        sv.empty_berths = net_.node(i).berth_count - ns.occupancy - ns.reserved;
        sv.empty_vehicles = static_cast<int>(ns.idle.size());
        sv.inbound_empties = ns.inbound_empty;
        sv.ai_s = demand_estimate_ai(i, ev.time);
        views.push_back(sv);
    }

    const std::vector<MoveCandidate> moves = decision_round(controller_, net_, std::move(views));
    log_event(ev.time, "evm_epoch", -1, -1, -1);
    for (const MoveCandidate& mv : moves) {
        NodeState& src = nodes_[static_cast<std::size_t>(mv.source)];
        const int vehicle = *src.idle.begin();
        src.idle.erase(src.idle.begin());
        Vehicle& v = vehicles_[static_cast<std::size_t>(vehicle)];
        if (mv.kind == MoveKind::Balance) {
            nodes_[static_cast<std::size_t>(mv.target)].reserved += 1;
            v.reserved_berth = true;
        }
        depart(vehicle, mv.source, mv.target, false, ev.time);
        log_event(ev.time, "dispatch", vehicle, mv.source, mv.target);
    }
    schedule(ev.time + cfg_.evm_epoch, EvEpoch, -1);
}

void Simulation::log_event(double t, const char* kind, int vehicle, NodeId from, NodeId to) {
    if (!event_log_) return;
    (*event_log_) << t << '\t' << kind << '\t' << vehicle << '\t' << from << '\t' << to << '\n';
}

void Simulation::check_invariants() const {
    int idle = 0, dwelling = 0, moving = 0;
    std::vector<int> at_node(nodes_.size(), 0);
    for (const Vehicle& v : vehicles_) {
        switch (v.state) {
        case VehState::Idle:
            ++idle;
            at_node[static_cast<std::size_t>(v.node)] += 1;
            break;
        case VehState::Dwelling:
            ++dwelling;
            at_node[static_cast<std::size_t>(v.node)] += 1;
            break;
        default:
            ++moving;
            break;
        }
    }
    if (idle + dwelling + moving != cfg_.fleet_size)
        throw std::logic_error("vehicle conservation violated");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const NodeState& ns = nodes_[i];
        if (ns.occupancy != at_node[i]) throw std::logic_error("occupancy out of sync");
        if (ns.reserved < 0 || ns.inbound_empty < 0) throw std::logic_error("negative node counter");
        if (ns.occupancy + ns.reserved > net_.node(static_cast<NodeId>(i)).berth_count) {
            std::ostringstream os;
            os << "berth overflow at node " << i << " at t=" << now_;
            throw BerthOverflow(os.str());
        }
    }
}

SimMetrics Simulation::run() {
    if (ran_) throw std::logic_error("Simulation::run may only be called once");
    ran_ = true;

    // Initial fleet placement: round-robin over stations, capacitors as
    // spill-over once every station berth is taken.
    std::vector<NodeId> stations, capacitors;
    for (const Node& n : net_.nodes())
        (n.kind == NodeKind::Station ? stations : capacitors).push_back(n.id);
    std::size_t cursor = 0;
    for (int v = 0; v < cfg_.fleet_size; ++v) {
        NodeId placed = -1;
        for (std::size_t k = 0; k < stations.size() && placed < 0; ++k) {
            const NodeId cand = stations[(cursor + k) % stations.size()];
            if (nodes_[static_cast<std::size_t>(cand)].occupancy < net_.node(cand).berth_count) {
                placed = cand;
                cursor = (cursor + k + 1) % stations.size();
            }
        }
        for (std::size_t k = 0; k < capacitors.size() && placed < 0; ++k) {
            const NodeId cand = capacitors[k];
            if (nodes_[static_cast<std::size_t>(cand)].occupancy < net_.node(cand).berth_count)
                placed = cand;
        }
        if (placed < 0) throw FleetExceedsBerths("no berth left for vehicle " + std::to_string(v));
        Vehicle veh;
        veh.state = VehState::Idle;
        veh.node = placed;
        vehicles_.push_back(veh);
        nodes_[static_cast<std::size_t>(placed)].occupancy += 1;
        nodes_[static_cast<std::size_t>(placed)].idle.insert(v);
    }

    if (demand_.mode == DemandMode::FiniteDemand) {
        for (NodeId s = 0; s < net_.node_count(); ++s) schedule_next_arrival(s);
    } else {
        for (NodeId s = 0; s < net_.node_count(); ++s) match_idle_vehicles(s, 0.0);
    }
    schedule(cfg_.evm_epoch, EvEpoch, -1);

    while (!heap_.empty()) {
        std::pop_heap(heap_.begin(), heap_.end(), [](const Event& a, const Event& b) { return a > b; });
        const Event ev = heap_.back();
        heap_.pop_back();
        now_ = ev.time;
        switch (ev.kind) {
        case EvArrival: handle_arrival(ev); break;
        case EvVehicleArrive: handle_vehicle_arrive(ev); break;
        case EvDwellDone: handle_dwell_done(ev); break;
        case EvEpoch: handle_epoch(ev); break;
        }
        check_invariants();
    }
    return finalize();
}

SimMetrics Simulation::finalize() {
    SimMetrics m;
    for (const TripRecord& t : trips_) {
        if (t.completion_time <= cfg_.warmup) continue;
        if (t.full) {
            m.full_trips += 1;
            m.full_distance += t.distance;
        } else {
            m.empty_trips += 1;
            m.empty_distance += t.distance;
        }
    }
    m.throughput = static_cast<double>(m.full_trips) / ((cfg_.horizon - cfg_.warmup) / 3600.0);
    m.served_groups = m.full_trips;

    std::vector<double> waits;
    double censored_sum = 0.0;
    int censored_count = 0;
    for (const GroupRecord& g : groups_) {
        if (g.arrival_time > cfg_.horizon) continue;
        if (g.board_time >= 0.0 && g.board_time > cfg_.warmup)
            waits.push_back(g.board_time - g.arrival_time);
        if (g.arrival_time >= cfg_.warmup) {
            const double end = g.board_time >= 0.0 ? g.board_time : cfg_.horizon;
            censored_sum += end - g.arrival_time;
            censored_count += 1;
        }
    }
    if (!waits.empty()) {
        double sum = 0.0;
        for (double w : waits) sum += w;
        m.mean_wait = sum / static_cast<double>(waits.size());
        std::sort(waits.begin(), waits.end());
        const auto idx = static_cast<std::size_t>(
            std::ceil(0.9 * static_cast<double>(waits.size()))) - 1;
        m.p90_wait = waits[idx];
    }
    if (censored_count > 0) m.censored_mean_wait = censored_sum / censored_count;

    for (const NodeState& ns : nodes_) m.residual_queue += static_cast<int>(ns.queue.size());
    return m;
}

DemandHistory Simulation::observe_history(double window) const {
    if (!ran_) throw std::logic_error("observe_history requires a finished run");
    if (window > cfg_.horizon)
        throw WindowTooLong("window of " + std::to_string(window) + " s exceeds elapsed " +
                            std::to_string(cfg_.horizon) + " s");
    DemandHistory h;
    h.source = DemandHistory::Source::ObservedWindow;
    for (const NodeState& ns : nodes_) {
        const auto first = std::upper_bound(ns.arrival_log.begin(), ns.arrival_log.end(),
                                            cfg_.horizon - window);
        const auto count = static_cast<double>(ns.arrival_log.end() - first);
        h.ai_s.push_back(count > 0.0 ? std::min(window / count, cfg_.ai_ceiling) : cfg_.ai_ceiling);
    }
    return h;
}

DemandHistory Simulation::history_from_prior(const DemandSpec& demand, double ceiling) {
    DemandHistory h;
    h.source = DemandHistory::Source::ScenarioPrior;
    for (double rate : demand.arrival_rate)
        h.ai_s.push_back(rate > 0.0 ? std::min(1.0 / rate, ceiling) : ceiling);
    return h;
}

SimMetrics run_simulation(const NetworkModel& net, const DemandSpec& demand,
                          const SimConfig& config, const ControllerParams& controller) {
    Simulation sim(net, demand, config, controller);
    return sim.run();
}

double measure_ridership(const NetworkModel& net, const DemandSpec& demand,
                         const SimConfig& config, const ControllerParams& controller) {
    DemandSpec d = demand;
    d.mode = DemandMode::InfiniteQueues;
    return run_simulation(net, d, config, controller).throughput;
}

} // namespace atn
