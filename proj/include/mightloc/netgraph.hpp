#pragma once

// Pipe network topology, steady-state hydraulics and path enumeration.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace mightloc::net {

enum class NodeKind { Inlet, Outlet, Connecting };

inline const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Inlet: return "inlet";
        case NodeKind::Outlet: return "outlet";
        case NodeKind::Connecting: return "connecting";
    }
    return "?";
}

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Connecting;
    std::optional<std::array<double, 2>> position;  // meters, display only
};

struct Pipe {
    int id = 0;  // positive, unique; paths are ordered by these
    std::string source;
    std::string destination;
    double length = 0.0;  // m
    double radius = 0.0;  // m
};

/// Directed multigraph of pipes. Immutable once constructed; the constructor
/// validates the topology and throws ValidationError on any violation.
class PipeNetwork {
public:
    enum class Check { Full, OrientationOnly };

    PipeNetwork() = default;

    PipeNetwork(std::vector<Node> nodes, std::vector<Pipe> pipes,
                std::map<std::string, double> inlet_flows, Check check = Check::Full)
        : nodes_(std::move(nodes)), pipes_(std::move(pipes)), inlet_flows_(std::move(inlet_flows)) {
        std::sort(pipes_.begin(), pipes_.end(),
                  [](const Pipe& a, const Pipe& b) { return a.id < b.id; });
        index();
        validate(check);
    }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Pipe>& pipes() const noexcept { return pipes_; }
    const std::map<std::string, double>& inlet_flows() const noexcept { return inlet_flows_; }

    bool has_node(const std::string& id) const { return node_pos_.count(id) != 0; }
    bool has_pipe(int id) const { return pipe_pos_.count(id) != 0; }

    std::size_t node_index(const std::string& id) const {
        auto it = node_pos_.find(id);
        if (it == node_pos_.end()) throw ValidationError("unknown node '" + id + "'");
        return it->second;
    }
    std::size_t pipe_index(int id) const {
        auto it = pipe_pos_.find(id);
        if (it == pipe_pos_.end()) throw ValidationError("unknown pipe " + std::to_string(id));
        return it->second;
    }
    const Node& node(const std::string& id) const { return nodes_[node_index(id)]; }
    const Pipe& pipe(int id) const { return pipes_[pipe_index(id)]; }

    /// Positions (into pipes()) of the pipes leaving / entering a node, ascending by pipe id.
    const std::vector<std::size_t>& out_pipes(std::size_t node) const { return out_[node]; }
    const std::vector<std::size_t>& in_pipes(std::size_t node) const { return in_[node]; }

    std::size_t count(NodeKind kind) const {
        return static_cast<std::size_t>(std::count_if(
            nodes_.begin(), nodes_.end(), [kind](const Node& n) { return n.kind == kind; }));
    }
    /// Nodes with two or more outgoing pipes.
    std::vector<std::string> bifurcations() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (out_[i].size() >= 2) out.push_back(nodes_[i].id);
        return out;
    }

    /// Node indices in a topological order (sources first).
    const std::vector<std::size_t>& topological_order() const noexcept { return topo_; }

private:
    void index() {
        node_pos_.clear();
        pipe_pos_.clear();
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].id.empty()) throw ValidationError("empty node id");
            if (!node_pos_.emplace(nodes_[i].id, i).second)
                throw ValidationError("duplicate node id '" + nodes_[i].id + "'");
        }
        out_.assign(nodes_.size(), {});
        in_.assign(nodes_.size(), {});
        for (std::size_t i = 0; i < pipes_.size(); ++i) {
            const Pipe& p = pipes_[i];
            if (p.id <= 0) throw ValidationError("pipe ids must be positive");
            if (!pipe_pos_.emplace(p.id, i).second)
                throw ValidationError("duplicate pipe id " + std::to_string(p.id));
            auto s = node_pos_.find(p.source);
            auto d = node_pos_.find(p.destination);
            if (s == node_pos_.end())
                throw ValidationError("pipe " + std::to_string(p.id) + " references unknown node '" + p.source + "'");
            if (d == node_pos_.end())
                throw ValidationError("pipe " + std::to_string(p.id) + " references unknown node '" + p.destination + "'");
            out_[s->second].push_back(i);
            in_[d->second].push_back(i);
        }
    }

    void validate(Check check) {
        if (nodes_.empty()) throw ValidationError("network has no nodes");
        for (const Pipe& p : pipes_) {
            if (!(p.length > 0.0) || !std::isfinite(p.length))
                throw ValidationError("pipe " + std::to_string(p.id) + ": length must be > 0");
            if (!(p.radius > 0.0) || !std::isfinite(p.radius))
                throw ValidationError("pipe " + std::to_string(p.id) + ": radius must be > 0");
        }
        if (check == Check::Full) {
            for (std::size_t i = 0; i < nodes_.size(); ++i) {
                const auto& n = nodes_[i];
                const bool has_in = !in_[i].empty(), has_out = !out_[i].empty();
                switch (n.kind) {
                    case NodeKind::Inlet:
                        if (has_in) throw ValidationError("inlet '" + n.id + "' has an incoming pipe");
                        if (!has_out) throw ValidationError("inlet '" + n.id + "' has no outgoing pipe");
                        break;
                    case NodeKind::Outlet:
                        if (has_out) throw ValidationError("outlet '" + n.id + "' has an outgoing pipe");
                        if (!has_in) throw ValidationError("outlet '" + n.id + "' has no incoming pipe");
                        break;
                    case NodeKind::Connecting:
                        if (!has_in || !has_out)
                            throw ValidationError("connecting node '" + n.id + "' needs incoming and outgoing pipes");
                        break;
                }
            }
            for (const auto& [id, q] : inlet_flows_) {
                auto it = node_pos_.find(id);
                if (it == node_pos_.end()) throw ValidationError("inlet flow for unknown node '" + id + "'");
                if (nodes_[it->second].kind != NodeKind::Inlet)
                    throw ValidationError("inlet flow assigned to non-inlet node '" + id + "'");
                if (!(q > 0.0) || !std::isfinite(q))
                    throw ValidationError("inlet flow at '" + id + "' must be > 0");
            }
            for (const auto& n : nodes_)
                if (n.kind == NodeKind::Inlet && !inlet_flows_.count(n.id))
                    throw ValidationError("inlet '" + n.id + "' has no inflow rate");
            check_connected();
        }
        check_acyclic();
    }

    void check_connected() const {
        std::vector<char> seen(nodes_.size(), 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const std::size_t n = stack.back();
            stack.pop_back();
            auto visit = [&](std::size_t m) {
                if (!seen[m]) {
                    seen[m] = 1;
                    stack.push_back(m);
                }
            };
            for (std::size_t p : out_[n]) visit(node_pos_.at(pipes_[p].destination));
            for (std::size_t p : in_[n]) visit(node_pos_.at(pipes_[p].source));
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (!seen[i]) throw ValidationError("network is not connected (node '" + nodes_[i].id + "')");
    }

    void check_acyclic() {
        std::vector<std::size_t> indeg(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) indeg[i] = in_[i].size();
        std::queue<std::size_t> ready;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (indeg[i] == 0) ready.push(i);
        topo_.clear();
        while (!ready.empty()) {
            const std::size_t n = ready.front();
            ready.pop();
            topo_.push_back(n);
            for (std::size_t p : out_[n]) {
                const std::size_t d = node_pos_.at(pipes_[p].destination);
                if (--indeg[d] == 0) ready.push(d);
            }
        }
        if (topo_.size() != nodes_.size()) throw ValidationError("cycle detected in pipe network");
    }

    std::vector<Node> nodes_;
    std::vector<Pipe> pipes_;
    std::map<std::string, double> inlet_flows_;
    std::unordered_map<std::string, std::size_t> node_pos_;
    std::unordered_map<int, std::size_t> pipe_pos_;
    std::vector<std::vector<std::size_t>> out_, in_;
    std::vector<std::size_t> topo_;
};

/// Steady flow state. `network` is the input network re-oriented so that every
/// pipe carries non-negative flow along its stored direction; the per-pipe vectors
/// follow network.pipes() order.
struct FlowField {
    PipeNetwork network;
    std::vector<double> flow;        // Q_i, m^3/s
    std::vector<double> velocity;    // mean cross-sectional velocity, m/s
    std::vector<double> dispersion;  // effective (Taylor-Aris) diffusion coefficient, m^2/s
    double diffusion = 0.0;          // molecular D, m^2/s

    std::size_t pos(int pipe_id) const { return network.pipe_index(pipe_id); }
    double flow_of(int pipe_id) const { return flow[pos(pipe_id)]; }
    double velocity_of(int pipe_id) const { return velocity[pos(pipe_id)]; }
    double dispersion_of(int pipe_id) const { return dispersion[pos(pipe_id)]; }
};

/// Effective diffusion coefficient of laminar pipe flow.
inline double taylor_aris(double radius, double velocity, double diffusion) {
    return radius * radius * velocity * velocity / (48.0 * diffusion) + diffusion;
}

/// Builds a FlowField from given per-pipe flows (network order). The network is
/// taken as already oriented; negative flows are rejected.
inline FlowField make_flow_field(PipeNetwork net, std::vector<double> flow, double diffusion) {
    if (!(diffusion > 0.0)) throw ValidationError("diffusion coefficient must be > 0");
    if (flow.size() != net.pipes().size()) throw ValidationError("flow vector size mismatch");
    FlowField f;
    f.diffusion = diffusion;
    f.velocity.resize(flow.size());
    f.dispersion.resize(flow.size());
    for (std::size_t i = 0; i < flow.size(); ++i) {
        if (flow[i] < 0.0) throw ValidationError("negative flow along stored pipe direction");
        const double r = net.pipes()[i].radius;
        f.velocity[i] = flow[i] / (kPi * r * r);
        f.dispersion[i] = taylor_aris(r, f.velocity[i], diffusion);
    }
    f.flow = std::move(flow);
    f.network = std::move(net);
    return f;
}

inline constexpr double kWaterViscosity20C = 1.0016e-3;  // Pa s

/// Steady flows from the hydraulic circuit analogy: each pipe is a Hagen-Poiseuille
/// resistance 8 mu l / (pi r^4), inlets inject their fixed flow, outlets sit at zero
/// pressure, and the nodal (Kirchhoff current law) system is solved for the pressures.
inline FlowField solve_flow(const PipeNetwork& net, double diffusion,
                            double viscosity = kWaterViscosity20C) {
    if (!(viscosity > 0.0)) throw ValidationError("viscosity must be > 0");
    const auto& nodes = net.nodes();
    const auto& pipes = net.pipes();
    if (net.count(NodeKind::Outlet) == 0) throw SolverError("singular hydraulic system: no outlet");

    // Unknown pressures at all non-outlet nodes.
    std::vector<int> unknown(nodes.size(), -1);
    int n_unknown = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].kind != NodeKind::Outlet) unknown[i] = n_unknown++;

    std::vector<double> conductance(pipes.size());
    for (std::size_t i = 0; i < pipes.size(); ++i) {
        const double r = pipes[i].radius;
        conductance[i] = kPi * r * r * r * r / (8.0 * viscosity * pipes[i].length);
    }

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n_unknown, n_unknown);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_unknown);
    for (std::size_t i = 0; i < pipes.size(); ++i) {
        const int s = unknown[net.node_index(pipes[i].source)];
        const int d = unknown[net.node_index(pipes[i].destination)];
        const double g = conductance[i];
        if (s >= 0) G(s, s) += g;
        if (d >= 0) G(d, d) += g;
        if (s >= 0 && d >= 0) {
            G(s, d) -= g;
            G(d, s) -= g;
        }
    }
    double total_in = 0.0;
    for (const auto& [id, q] : net.inlet_flows()) {
        b(unknown[net.node_index(id)]) += q;
        total_in += q;
    }

    std::vector<double> pressure(nodes.size(), 0.0);
    if (n_unknown > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw SolverError("singular hydraulic system");
        const Eigen::VectorXd p = ldlt.solve(b);
        if (!p.allFinite()) throw SolverError("singular hydraulic system");
        const double scale = G.cwiseAbs().maxCoeff() * p.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff();
        if ((G * p - b).cwiseAbs().maxCoeff() > 1e-9 * scale)
            throw SolverError("singular hydraulic system");
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (unknown[i] >= 0) pressure[i] = p(unknown[i]);
    }

    std::vector<Pipe> oriented = pipes;
    std::vector<double> flow(pipes.size());
    bool flipped = false;
    for (std::size_t i = 0; i < pipes.size(); ++i) {
        double q = conductance[i] *
                   (pressure[net.node_index(pipes[i].source)] - pressure[net.node_index(pipes[i].destination)]);
        if (std::abs(q) <= 1e-14 * total_in) q = 0.0;
        if (q < 0.0) {
            std::swap(oriented[i].source, oriented[i].destination);
            q = -q;
            flipped = true;
        }
        flow[i] = q;
    }
    PipeNetwork out = flipped ? PipeNetwork(nodes, std::move(oriented), net.inlet_flows(),
                                            PipeNetwork::Check::OrientationOnly)
                              : net;
    return make_flow_field(std::move(out), std::move(flow), diffusion);
}

/// A directed path: pipe ids in travel order, the bifurcations strictly inside the
/// path (start and end nodes excluded), and the fraction of molecules taking it.
struct Path {
    std::vector<int> pipes;
    std::vector<std::string> bifurcations;
    double weight = 1.0;

    bool contains(int pipe_id) const {
        return std::find(pipes.begin(), pipes.end(), pipe_id) != pipes.end();
    }
};

/// All distinct directed paths from `from` to `to` in the oriented network of
/// `flow`, in lexicographic order of their pipe id sequences. Each path's weight is
/// the product, over its interior bifurcations, of the chosen outflow's share of
/// the bifurcation's total outflow. Paths carrying no flow (weight 0) are omitted.
inline std::vector<Path> enumerate_paths(const FlowField& flow, const std::string& from,
                                         const std::string& to) {
    const PipeNetwork& net = flow.network;
    const std::size_t src = net.node_index(from);
    const std::size_t dst = net.node_index(to);
    std::vector<Path> paths;
    if (src == dst) return paths;

    // Prune branches that cannot reach the destination.
    std::vector<char> reaches(net.nodes().size(), 0);
    reaches[dst] = 1;
    const auto& topo = net.topological_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        for (std::size_t p : net.out_pipes(*it))
            if (reaches[net.node_index(net.pipes()[p].destination)]) reaches[*it] = 1;
    if (!reaches[src]) return paths;

    Path current;
    std::function<void(std::size_t, double)> walk = [&](std::size_t node, double weight) {
        const auto& outs = net.out_pipes(node);
        const bool interior = !current.pipes.empty();
        const bool split = interior && outs.size() >= 2;
        double total = 0.0;
        if (split)
            for (std::size_t p : outs) total += flow.flow[p];
        for (std::size_t p : outs) {
            const std::size_t next = net.node_index(net.pipes()[p].destination);
            if (!reaches[next]) continue;
            double w = weight;
            if (split) w *= total > 0.0 ? flow.flow[p] / total : 0.0;
            if (w <= 0.0) continue;
            current.pipes.push_back(net.pipes()[p].id);
            if (split) current.bifurcations.push_back(net.nodes()[node].id);
            if (next == dst) {
                paths.push_back(Path{current.pipes, current.bifurcations, w});
            } else {
                walk(next, w);
            }
            current.pipes.pop_back();
            if (split) current.bifurcations.pop_back();
        }
    };
    walk(src, 1.0);
    return paths;
}

}  // namespace mightloc::net
