#include "atn/evm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace atn {

void EvmParams::validate() const {
    const double weights[] = {f_q, f_eb, f_nd, f_ai};
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidParams("weights must be finite and >= 0");
    if (t_q < 0 || t_eb < 0 || t_ev < 0)
        throw InvalidParams("count thresholds must be non-negative integers");
    if (!(t_nd >= 0.0) || !std::isfinite(t_nd))
        throw InvalidParams("t_nd must be finite and >= 0");
    if (std::isnan(t_total) || t_total == -std::numeric_limits<double>::infinity())
        throw InvalidParams("t_total must be finite or +inf");
}

void ControllerParams::validate() const {
    calling.validate();
    balancing.validate();
}

std::array<double, 18> ControllerParams::to_flat() const {
    auto half = [](const EvmParams& p, double* out) {
        out[0] = p.f_q;
        out[1] = p.f_eb;
        out[2] = p.f_nd;
        out[3] = p.f_ai;
        out[4] = static_cast<double>(p.t_q);
        out[5] = static_cast<double>(p.t_eb);
        out[6] = static_cast<double>(p.t_ev);
        out[7] = p.t_nd;
        out[8] = p.t_total;
    };
    std::array<double, 18> v{};
    half(calling, v.data());
    half(balancing, v.data() + 9);
    return v;
}

ControllerParams ControllerParams::from_flat(const std::array<double, 18>& v) {
    auto half = [](const double* in) {
        EvmParams p;
        p.f_q = std::max(0.0, in[0]);
        p.f_eb = std::max(0.0, in[1]);
        p.f_nd = std::max(0.0, in[2]);
        p.f_ai = std::max(0.0, in[3]);
        p.t_q = std::max(0, static_cast<int>(std::lround(in[4])));
        p.t_eb = std::max(0, static_cast<int>(std::lround(in[5])));
        p.t_ev = std::max(0, static_cast<int>(std::lround(in[6])));
        p.t_nd = std::max(0.0, in[7]);
        p.t_total = in[8];
        return p;
    };
    ControllerParams cp{half(v.data()), half(v.data() + 9)};
    cp.validate();
    return cp;
}

int effective_queue(const StationView& dst) {
    return std::max(0, dst.queue_len - dst.inbound_empties);
}

ScoreOutcome score_move(const EvmParams& p, const NetworkModel& net,
                        const StationView& src, const StationView& dst,
                        ScoreStats* stats) {
    if (stats) ++stats->calls;
    auto reject = [&](Gate g) {
        if (stats) ++stats->gate_rejections;
        return ScoreOutcome{false, 0.0, g};
    };

    if (effective_queue(dst) < p.t_q) return reject(Gate::QueueThreshold);
    if (dst.empty_berths < p.t_eb) return reject(Gate::EmptyBerthThreshold);
    if (src.empty_vehicles < p.t_ev) return reject(Gate::EmptyVehicleThreshold);
    const double nd = net.nd(src.node, dst.node);
    if (nd < p.t_nd) return reject(Gate::NdThreshold);

    if (stats) ++stats->scores_computed;
    const double score = p.f_q * static_cast<double>(effective_queue(dst)) +
                         p.f_eb * static_cast<double>(dst.empty_berths) +
                         p.f_nd * nd + p.f_ai * (1.0 / dst.ai_s);
    if (score < p.t_total) {
        if (stats) ++stats->gate_rejections;
        return ScoreOutcome{false, score, Gate::TotalThreshold};
    }
    return ScoreOutcome{true, score, Gate::None};
}

namespace {

void check_views(const std::vector<StationView>& views, const NetworkModel& net) {
    if (static_cast<int>(views.size()) != net.node_count())
        throw InconsistentViews("views must cover all nodes");
    for (std::size_t i = 0; i < views.size(); ++i) {
        const StationView& v = views[i];
        if (v.node != static_cast<NodeId>(i))
            throw InconsistentViews("view " + std::to_string(i) + " has node id " +
                                    std::to_string(v.node));
        if (v.queue_len < 0 || v.empty_berths < 0 || v.empty_vehicles < 0 ||
            v.inbound_empties < 0 || !(v.ai_s > 0.0))
            throw InconsistentViews("negative count or non-positive inter-arrival at node " +
                                    std::to_string(v.node));
    }
}

/// Greedy inner loop shared by both phases. A candidate needs at least one
/// idle vehicle at the source; calls additionally need an unanswered queue
/// at a station target, balances a reservable berth. This realizes the
/// dispatch rule that a vehicle is only sent where a passenger or a free
/// berth awaits it, which keeps berth occupancy bounded.
void run_phase(MoveKind kind, const EvmParams& p, const NetworkModel& net,
               std::vector<StationView>& views, std::vector<MoveCandidate>& out) {
    const int n = static_cast<int>(views.size());
    for (;;) {
        bool found = false;
        MoveCandidate best;
        double best_dist = 0.0;
        for (int s = 0; s < n; ++s) {
            if (views[static_cast<std::size_t>(s)].empty_vehicles < 1) continue;
            for (int t = 0; t < n; ++t) {
                if (t == s) continue;
                const StationView& src = views[static_cast<std::size_t>(s)];
                const StationView& dst = views[static_cast<std::size_t>(t)];
                if (kind == MoveKind::Call) {
                    if (dst.kind != NodeKind::Station) continue;
                    if (effective_queue(dst) < 1) continue;
                } else {
                    if (dst.empty_berths < 1) continue;
                }
                const ScoreOutcome r = score_move(p, net, src, dst);
                if (!r.accepted) continue;
                const double d = net.dist(s, t);
                const bool better =
                    !found || r.score > best.score ||
                    (r.score == best.score &&
                     (d < best_dist ||
                      (d == best_dist && (s < best.source || (s == best.source && t < best.target)))));
                if (better) {
                    found = true;
                    best = MoveCandidate{s, t, r.score, kind};
                    best_dist = d;
                }
            }
        }
        if (!found) break;
        StationView& src = views[static_cast<std::size_t>(best.source)];
        StationView& dst = views[static_cast<std::size_t>(best.target)];
        src.empty_vehicles -= 1;
        dst.inbound_empties += 1;
        if (kind == MoveKind::Balance) dst.empty_berths -= 1;
        out.push_back(best);
    }
}

} // namespace

std::vector<MoveCandidate> decision_round(const ControllerParams& cp,
                                          const NetworkModel& net,
                                          std::vector<StationView> views) {
    check_views(views, net);
    std::vector<MoveCandidate> out;
    run_phase(MoveKind::Call, cp.calling, net, views, out);
    run_phase(MoveKind::Balance, cp.balancing, net, views, out);
    return out;
}

std::vector<StationView> horizon_filter(const std::vector<StationView>& views,
                                        double t_nd, const NetworkModel& net,
                                        NodeId center) {
    std::vector<StationView> out;
    for (const StationView& v : views) {
        if (v.node == center) continue;
        if (net.nd(center, v.node) >= t_nd) out.push_back(v);
    }
    return out;
}

} // namespace atn
