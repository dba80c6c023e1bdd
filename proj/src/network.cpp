#include "atn/network.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace atn {

namespace {

std::string node_label(const std::vector<Node>& nodes, NodeId id) {
    std::ostringstream os;
    os << id;
    if (id >= 0 && id < static_cast<int>(nodes.size()) && !nodes[static_cast<std::size_t>(id)].name.empty())
        os << " (\"" << nodes[static_cast<std::size_t>(id)].name << "\")";
    return os.str();
}

} // namespace

NetworkModel::NetworkModel(std::vector<Node> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    const std::size_t n = nodes_.size();
    if (n < 2) throw InvalidNode("network needs at least 2 nodes");

    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = nodes_[i];
        if (nd.id != static_cast<NodeId>(i)) {
            std::ostringstream os;
            os << "node ids must be 0.." << n - 1 << " in order; position " << i
               << " has id " << nd.id;
            throw InvalidNode(os.str());
        }
        if (nd.berth_count < 1)
            throw InvalidNode("node " + node_label(nodes_, nd.id) + " has berth_count < 1");
        total_berths_ += nd.berth_count;
        if (nd.kind == NodeKind::Station) ++station_count_;
    }

    std::set<std::pair<NodeId, NodeId>> seen;
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (const Edge& e : edges_) {
        if (e.from < 0 || e.from >= static_cast<int>(n) || e.to < 0 || e.to >= static_cast<int>(n)) {
            const NodeId bad = (e.from < 0 || e.from >= static_cast<int>(n)) ? e.from : e.to;
            throw InvalidEdge("edge references unknown node " + std::to_string(bad));
        }
        if (e.from == e.to)
            throw InvalidEdge("self-loop at node " + node_label(nodes_, e.from));
        if (!(e.length > 0.0))
            throw InvalidEdge("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                              " has non-positive length");
        if (!seen.insert({e.from, e.to}).second)
            throw InvalidEdge("parallel edge " + std::to_string(e.from) + "->" + std::to_string(e.to));
        adj[static_cast<std::size_t>(e.from)].push_back({e.to, e.length});
    }

    const double inf = std::numeric_limits<double>::infinity();
    dist_.assign(n, std::vector<double>(n, inf));

    // Dijkstra from every source; networks are tiny so this is plenty fast.
    using Item = std::pair<double, int>;
    for (std::size_t s = 0; s < n; ++s) {
        auto& row = dist_[s];
        row[s] = 0.0;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        pq.push({0.0, static_cast<int>(s)});
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d > row[static_cast<std::size_t>(u)]) continue;
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                const double nd2 = d + w;
                if (nd2 < row[static_cast<std::size_t>(v)]) {
                    row[static_cast<std::size_t>(v)] = nd2;
                    pq.push({nd2, v});
                }
            }
        }
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (!(dist_[i][j] < inf)) {
                throw NotStronglyConnected("no path from node " + node_label(nodes_, static_cast<NodeId>(i)) +
                                           " to node " + node_label(nodes_, static_cast<NodeId>(j)));
            }
            sum += dist_[i][j];
        }
    }
    d_av_ = sum / static_cast<double>(n * (n - 1));
}

double NetworkModel::nd(NodeId i, NodeId j) const {
    if (i == j) throw SameNode("nd is undefined on the diagonal (node " + std::to_string(i) + ")");
    return d_av_ / dist(i, j);
}

NetworkModel build_network(std::vector<Node> nodes, std::vector<Edge> edges) {
    return NetworkModel(std::move(nodes), std::move(edges));
}

double nd_between(const NetworkModel& net, NodeId i, NodeId j) {
    return net.nd(i, j);
}

} // namespace atn
