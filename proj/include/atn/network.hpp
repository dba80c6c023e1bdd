#pragma once

#include <string>
#include <vector>

#include "atn/errors.hpp"

namespace atn {

/// Index of a node; nodes of one network are numbered 0..n-1.
using NodeId = int;

enum class NodeKind { Station, Capacitor };

struct Node {
    NodeId id = -1;
    NodeKind kind = NodeKind::Station;
    int berth_count = 1;
    std::string name;
};

struct Edge {
    NodeId from = -1;
    NodeId to = -1;
    double length = 0.0; // meters
};

struct InvalidNode : ValidationError {
    using ValidationError::ValidationError;
};
struct InvalidEdge : ValidationError {
    using ValidationError::ValidationError;
};
struct NotStronglyConnected : ValidationError {
    using ValidationError::ValidationError;
};
struct SameNode : ValidationError {
    using ValidationError::ValidationError;
};

/// Directed weighted guideway with every distance-derived quantity the
/// controllers need, computed once at construction:
///   dist  - all-pairs shortest-path distances (meters)
///   d_av  - mean of dist over ordered pairs of distinct nodes
///   nd    - normalized inverse distance, d_av / dist; 1 at the network's
///           average distance, larger for closer pairs. Undefined on the
///           diagonal.
/// Immutable after construction and safe to share across threads.
class NetworkModel {
public:
    NetworkModel(std::vector<Node> nodes, std::vector<Edge> edges);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    double dist(NodeId i, NodeId j) const {
        return dist_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    double d_av() const { return d_av_; }

    /// nd(i, j) = d_av / dist(i, j). Throws SameNode when i == j.
    double nd(NodeId i, NodeId j) const;

    int total_berths() const { return total_berths_; }
    int station_count() const { return station_count_; }

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::vector<double>> dist_;
    double d_av_ = 0.0;
    int total_berths_ = 0;
    int station_count_ = 0;
};

/// Validates the node/edge lists and assembles the model.
/// Throws InvalidNode, InvalidEdge or NotStronglyConnected.
NetworkModel build_network(std::vector<Node> nodes, std::vector<Edge> edges);

/// nd(i, j) as a free function; strictly decreasing in dist(i, j).
double nd_between(const NetworkModel& net, NodeId i, NodeId j);

} // namespace atn
