#include "atn/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "atn/parallel.hpp"

namespace atn {

std::array<double, EnvVector::kDims> EnvVector::flat() const {
    return {fleet_size,        max_velocity,      total_demand,
            station_demand[0], station_demand[1], station_demand[2], station_demand[3],
            od_structure[0],   od_structure[1],   od_structure[2],   od_structure[3]};
}

EnvVector EnvVector::from_flat(const std::array<double, kDims>& v) {
    EnvVector e;
    e.fleet_size = v[0];
    e.max_velocity = v[1];
    e.total_demand = v[2];
    e.station_demand = {v[3], v[4], v[5], v[6]};
    e.od_structure = {v[7], v[8], v[9], v[10]};
    return e;
}

int EnvVector::od_index() const {
    int hot = -1;
    for (int i = 0; i < 4; ++i) {
        if (std::abs(od_structure[static_cast<std::size_t>(i)] - 1.0) < 1e-9) {
            if (hot >= 0) throw InvalidEnv("od_structure has more than one set component");
            hot = i;
        } else if (std::abs(od_structure[static_cast<std::size_t>(i)]) > 1e-9) {
            throw InvalidEnv("od_structure components must be 0 or 1");
        }
    }
    if (hot < 0) throw InvalidEnv("od_structure has no set component");
    return hot;
}

void EnvVector::validate() const {
    if (!(fleet_size >= 1.0)) throw InvalidEnv("fleet_size must be >= 1");
    if (!(max_velocity > 0.0)) throw InvalidEnv("max_velocity must be > 0");
    if (!(total_demand >= 0.0)) throw InvalidEnv("total_demand must be >= 0");
    double probe_sum = 0.0;
    for (double d : station_demand) {
        if (!(d >= 0.0)) throw InvalidEnv("station_demand entries must be >= 0");
        probe_sum += d;
    }
    if (probe_sum > total_demand + 1e-9)
        throw InvalidEnv("station_demand sums above total_demand");
    od_index(); // validates the one-hot selector
}

Scenario realize_scenario(const EnvVector& env, const NetworkModel& net,
                          const SimConfig& base, const std::vector<OdMatrix>& od_library,
                          const std::array<NodeId, 4>& probes, std::uint64_t seed, int id) {
    env.validate();
    if (od_library.size() != 4) throw InvalidEnv("od_library must hold 4 matrices");
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const NodeId p = probes[i];
        if (p < 0 || p >= net.node_count() || net.node(p).kind != NodeKind::Station)
            throw InvalidEnv("probe " + std::to_string(p) + " is not a station");
        for (std::size_t j = 0; j < i; ++j)
            if (probes[j] == p) throw InvalidEnv("probes must be distinct");
    }

    Scenario sc;
    sc.id = id;
    sc.env = env;
    sc.net = &net;

    const std::size_t n = static_cast<std::size_t>(net.node_count());
    sc.demand.mode = DemandMode::FiniteDemand;
    sc.demand.arrival_rate.assign(n, 0.0);
    double probe_sum = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        sc.demand.arrival_rate[static_cast<std::size_t>(probes[i])] =
            env.station_demand[i] / 3600.0;
        probe_sum += env.station_demand[i];
    }
    const double rest = std::max(0.0, env.total_demand - probe_sum);
    std::vector<NodeId> others;
    for (const Node& node : net.nodes()) {
        if (node.kind != NodeKind::Station) continue;
        if (std::find(probes.begin(), probes.end(), node.id) == probes.end())
            others.push_back(node.id);
    }
    if (rest > 0.0) {
        if (others.empty()) throw InvalidEnv("demand left over but every station is a probe");
        for (NodeId s : others)
            sc.demand.arrival_rate[static_cast<std::size_t>(s)] =
                rest / static_cast<double>(others.size()) / 3600.0;
    }
    sc.demand.od_matrix = od_library[static_cast<std::size_t>(env.od_index())];

    sc.sim = base;
    sc.sim.fleet_size = static_cast<int>(std::lround(env.fleet_size));
    sc.sim.max_velocity = env.max_velocity;
    sc.sim.seed = seed;
    sc.sim.validate();
    sc.demand.validate(net);
    return sc;
}

double evaluate(const Scenario& scenario, const ControllerParams& params, int replications) {
    if (replications < 1) throw InvalidEnv("replications must be >= 1");
    double sum = 0.0;
    for (int r = 0; r < replications; ++r) {
        SimConfig cfg = scenario.sim;
        cfg.seed = derive_seed(scenario.sim.seed, "replication", static_cast<std::uint64_t>(r));
        const SimMetrics m = run_simulation(*scenario.net, scenario.demand, cfg, params);
        sum += m.censored_mean_wait.value_or(0.0);
    }
    return sum / static_cast<double>(replications);
}

void HalfBounds::validate() const {
    auto chk = [](const ParamRange& r, const char* name) {
        if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
            throw EmptyBounds(std::string("empty or non-finite range for ") + name);
    };
    chk(f_q, "f_q");
    chk(f_eb, "f_eb");
    chk(f_nd, "f_nd");
    chk(f_ai, "f_ai");
    chk(t_nd, "t_nd");
    chk(t_total, "t_total");
    auto chki = [](const std::pair<int, int>& r, const char* name) {
        if (r.first > r.second || r.first < 0)
            throw EmptyBounds(std::string("empty range for ") + name);
    };
    chki(t_q, "t_q");
    chki(t_eb, "t_eb");
    chki(t_ev, "t_ev");
}

EvmParams HalfBounds::sample(Rng& rng) const {
    EvmParams p;
    p.f_q = rng.uniform(f_q.lo, f_q.hi);
    p.f_eb = rng.uniform(f_eb.lo, f_eb.hi);
    p.f_nd = rng.uniform(f_nd.lo, f_nd.hi);
    p.f_ai = rng.uniform(f_ai.lo, f_ai.hi);
    p.t_q = static_cast<int>(rng.uniform_int(t_q.first, t_q.second));
    p.t_eb = static_cast<int>(rng.uniform_int(t_eb.first, t_eb.second));
    p.t_ev = static_cast<int>(rng.uniform_int(t_ev.first, t_ev.second));
    p.t_nd = rng.uniform(t_nd.lo, t_nd.hi);
    p.t_total = rng.uniform(t_total.lo, t_total.hi);
    return p;
}

EvmParams HalfBounds::clamp(const EvmParams& in) const {
    EvmParams p = in;
    p.f_q = std::clamp(p.f_q, f_q.lo, f_q.hi);
    p.f_eb = std::clamp(p.f_eb, f_eb.lo, f_eb.hi);
    p.f_nd = std::clamp(p.f_nd, f_nd.lo, f_nd.hi);
    p.f_ai = std::clamp(p.f_ai, f_ai.lo, f_ai.hi);
    p.t_q = std::clamp(p.t_q, t_q.first, t_q.second);
    p.t_eb = std::clamp(p.t_eb, t_eb.first, t_eb.second);
    p.t_ev = std::clamp(p.t_ev, t_ev.first, t_ev.second);
    p.t_nd = std::clamp(p.t_nd, t_nd.lo, t_nd.hi);
    if (std::isfinite(p.t_total)) p.t_total = std::clamp(p.t_total, t_total.lo, t_total.hi);
    return p;
}

void SearchBounds::validate() const {
    calling.validate();
    balancing.validate();
}

namespace {

/// Which half of the controller a restricted search may touch.
enum class ActiveHalf { Both, Calling, Balancing };

ControllerParams make_candidate(int index, ActiveHalf half, const ControllerParams& incumbent,
                                const SearchBounds& bounds, std::uint64_t seed) {
    if (half == ActiveHalf::Both) {
        if (index == 0) return ControllerParams::disabled();
        if (index == 1) {
            return ControllerParams{bounds.calling.clamp(EvmParams::unit()),
                                    bounds.balancing.clamp(EvmParams::unit())};
        }
        Rng rng(derive_seed(seed, "candidate", static_cast<std::uint64_t>(index)));
        return ControllerParams{bounds.calling.sample(rng), bounds.balancing.sample(rng)};
    }
    // Half-restricted rounds keep the incumbent as candidate 0 so a round
    // without an improving sample changes nothing.
    if (index == 0) return incumbent;
    Rng rng(derive_seed(seed, "candidate", static_cast<std::uint64_t>(index)));
    ControllerParams cp = incumbent;
    if (half == ActiveHalf::Calling)
        cp.calling = bounds.calling.sample(rng);
    else
        cp.balancing = bounds.balancing.sample(rng);
    return cp;
}

struct PoolResult {
    int best_index = 0;
    double best_objective = 0.0;
    std::vector<double> objectives;
};

PoolResult evaluate_pool(const Scenario& scenario, const std::vector<ControllerParams>& pool,
                         int replications, int jobs) {
    PoolResult r;
    r.objectives.assign(pool.size(), 0.0);
    parallel_for(pool.size(), jobs, [&](std::size_t i) {
        r.objectives[i] = evaluate(scenario, pool[i], replications);
    });
    r.best_index = 0;
    r.best_objective = r.objectives[0];
    for (std::size_t i = 1; i < r.objectives.size(); ++i) {
        if (r.objectives[i] < r.best_objective) {
            r.best_objective = r.objectives[i];
            r.best_index = static_cast<int>(i);
        }
    }
    return r;
}

} // namespace

TuneResult random_search(const Scenario& scenario, int budget, const SearchBounds& bounds,
                         std::uint64_t seed, int replications, int jobs) {
    if (budget < 1) throw EmptyBounds("budget must be >= 1");
    bounds.validate();

    std::vector<ControllerParams> pool;
    pool.reserve(static_cast<std::size_t>(budget));
    for (int i = 0; i < budget; ++i)
        pool.push_back(make_candidate(i, ActiveHalf::Both, ControllerParams::disabled(), bounds, seed));

    const PoolResult r = evaluate_pool(scenario, pool, replications, jobs);
    TuneResult out;
    out.scenario_id = scenario.id;
    out.best_params = pool[static_cast<std::size_t>(r.best_index)];
    out.objective = r.best_objective;
    out.evals = budget;
    out.baseline_objective = r.objectives[0];
    return out;
}

TuneResult alternating_refine(const Scenario& scenario, const ControllerParams& start,
                              int rounds, int per_round_budget, const SearchBounds& bounds,
                              std::uint64_t seed, int replications, int jobs,
                              double baseline_objective) {
    if (rounds < 1) throw EmptyBounds("rounds must be >= 1");
    if (per_round_budget < 1) throw EmptyBounds("per_round_budget must be >= 1");
    bounds.validate();

    TuneResult out;
    out.scenario_id = scenario.id;
    ControllerParams incumbent = start;
    // The incumbent enters every round as candidate 0 and wins objective
    // ties by index, so its first evaluation happens inside round 1.
    double incumbent_objective = std::numeric_limits<double>::infinity();

    for (int round = 1; round <= rounds; ++round) {
        const ActiveHalf half = (round % 2 == 1) ? ActiveHalf::Calling : ActiveHalf::Balancing;
        const std::uint64_t round_seed = derive_seed(seed, "round", static_cast<std::uint64_t>(round));

        std::vector<ControllerParams> pool;
        pool.reserve(static_cast<std::size_t>(per_round_budget));
        for (int i = 0; i < per_round_budget; ++i)
            pool.push_back(make_candidate(i, half, incumbent, bounds, round_seed));

        const PoolResult r = evaluate_pool(scenario, pool, replications, jobs);
        out.evals += per_round_budget;
        if (r.best_objective < incumbent_objective) {
            incumbent_objective = r.best_objective;
            incumbent = pool[static_cast<std::size_t>(r.best_index)];
        }
        out.round_objectives.push_back(incumbent_objective);
        out.round_incumbents.push_back(incumbent);
    }

    if (std::isnan(baseline_objective)) {
        baseline_objective = evaluate(scenario, ControllerParams::disabled(), replications);
        out.evals += 1;
    }
    out.baseline_objective = baseline_objective;
    out.best_params = incumbent;
    out.objective = incumbent_objective;
    return out;
}

std::vector<DatasetRow> build_dataset(const std::vector<Scenario>& scenarios,
                                      const SearchSettings& settings) {
    if (scenarios.empty()) throw InvalidEnv("build_dataset needs at least one scenario");
    settings.bounds.validate();

    std::vector<DatasetRow> rows(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const Scenario& sc = scenarios[i];
        const std::uint64_t sc_seed = derive_seed(settings.seed, "tune", static_cast<std::uint64_t>(sc.id));
        TuneResult coarse = random_search(sc, settings.budget, settings.bounds, sc_seed,
                                          settings.replications, settings.jobs);
        TuneResult refined = alternating_refine(sc, coarse.best_params, settings.rounds,
                                                settings.budget, settings.bounds,
                                                derive_seed(sc_seed, "refine"),
                                                settings.replications, settings.jobs,
                                                coarse.baseline_objective);
        DatasetRow row;
        row.scenario_id = sc.id;
        row.env = sc.env.flat();
        row.params = refined.best_params.to_flat();
        row.objective = refined.objective;
        row.baseline = refined.baseline_objective;
        rows[i] = row;
        if (settings.progress) settings.progress(sc.id, refined);
    }
    std::sort(rows.begin(), rows.end(),
              [](const DatasetRow& a, const DatasetRow& b) { return a.scenario_id < b.scenario_id; });
    return rows;
}

std::vector<OdMatrix> builtin_od_structures(const NetworkModel& net, NodeId hub) {
    const std::size_t n = static_cast<std::size_t>(net.node_count());
    std::vector<NodeId> stations;
    for (const Node& node : net.nodes())
        if (node.kind == NodeKind::Station) stations.push_back(node.id);
    if (stations.size() < 2) throw InvalidEnv("need at least 2 stations for OD structures");
    if (net.node(hub).kind != NodeKind::Station) throw InvalidEnv("hub must be a station");

    auto blank = [&] { return OdMatrix(n, std::vector<double>(n, 0.0)); };
    auto normalize_row = [](std::vector<double>& row) {
        double sum = 0.0;
        for (double v : row) sum += v;
        if (sum > 0.0)
            for (double& v : row) v /= sum;
    };

    std::vector<OdMatrix> lib;

    // 1: uniform over the other stations.
    OdMatrix uniform = blank();
    for (NodeId s : stations) {
        for (NodeId t : stations)
            if (t != s) uniform[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)] = 1.0;
        normalize_row(uniform[static_cast<std::size_t>(s)]);
    }
    lib.push_back(uniform);

    // 2: hub-and-spoke. Spokes send most trips to the hub; the hub spreads
    // its trips over the spokes.
    OdMatrix hubspoke = blank();
    for (NodeId s : stations) {
        auto& row = hubspoke[static_cast<std::size_t>(s)];
        if (s == hub) {
            for (NodeId t : stations)
                if (t != hub) row[static_cast<std::size_t>(t)] = 1.0;
        } else {
            row[static_cast<std::size_t>(hub)] = 0.8;
            for (NodeId t : stations)
                if (t != s && t != hub) row[static_cast<std::size_t>(t)] = 0.2;
        }
        normalize_row(row);
    }
    lib.push_back(hubspoke);

    // 3: commuter exchange between two station clusters (split by index
    // parity within the station list).
    OdMatrix commuter = blank();
    for (std::size_t i = 0; i < stations.size(); ++i) {
        auto& row = commuter[static_cast<std::size_t>(stations[i])];
        for (std::size_t j = 0; j < stations.size(); ++j) {
            if (i == j) continue;
            const bool cross = (i % 2) != (j % 2);
            row[static_cast<std::size_t>(stations[j])] = cross ? 4.0 : 1.0;
        }
        normalize_row(row);
    }
    lib.push_back(commuter);

    // 4: ring-following; probability halves with each extra hop downstream
    // in station-list order.
    OdMatrix ring = blank();
    for (std::size_t i = 0; i < stations.size(); ++i) {
        auto& row = ring[static_cast<std::size_t>(stations[i])];
        for (std::size_t hop = 1; hop < stations.size(); ++hop) {
            const NodeId t = stations[(i + hop) % stations.size()];
            row[static_cast<std::size_t>(t)] = std::pow(0.5, static_cast<double>(hop - 1));
        }
        normalize_row(row);
    }
    lib.push_back(ring);

    return lib;
}

} // namespace atn
