#pragma once

#include <random>
#include <string>

#include <mightloc/experiments.hpp>

namespace fixtures {

// in --1--> c --2--> out
inline const char* kChain = R"(
[parameters]
diffusion 0.2
[nodes]
in inlet
c connecting
out outlet
[pipes]
1 in c 60 0.055
2 c out 90 0.055
[inlets]
in 5e-3
[transmitters]
1 1 0
[receiver]
2 45 1
)";

// in --1--> a, two parallel branches a --2,3--> b, b --4--> out
inline const char* kDiamond = R"(
[parameters]
diffusion 0.2
[nodes]
in inlet
a connecting
b connecting
out outlet
[pipes]
1 in a 40 0.055
2 a b 60 0.055
3 a b 150 0.045
4 b out 80 0.055
[inlets]
in 5e-3
[transmitters]
1 1 0
[receiver]
4 40 1
)";

// Three inlets merging into one trunk; distinct lateral lengths.
inline const char* kTree = R"(
[parameters]
diffusion 0.2
release point 1e8
[nodes]
i1 inlet
i2 inlet
i3 inlet
j1 connecting
j2 connecting
out outlet
[pipes]
1 i1 j1 50 0.055
2 i2 j1 400 0.055
3 i3 j2 1500 0.055
4 j1 j2 120 0.055
5 j2 out 200 0.055
[inlets]
i1 5e-3
i2 5e-3
i3 5e-3
[transmitters]
1 1 0
2 2 0
3 3 0
[receiver]
5 100 1
)";

inline mightloc::exp::Scenario scenario(const char* text) {
    return mightloc::exp::make_scenario(mightloc::parse_topology(text));
}

/// Random connected DAG with at most `max_pipes` pipes. Nodes 0..n-1 are in
/// topological order; node 0 is an inlet, the last node an outlet.
inline mightloc::net::PipeNetwork random_dag(std::mt19937_64& rng, int max_pipes) {
    using namespace mightloc::net;
    std::uniform_int_distribution<int> node_count(3, std::max(3, max_pipes / 2 + 1));
    const int n = node_count(rng);
    std::uniform_real_distribution<double> len(10.0, 500.0), rad(0.03, 0.08), q(1e-3, 1e-2), coin(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    // spanning chain keeps every node connected
    for (int i = 1; i < n; ++i) {
        std::uniform_int_distribution<int> pick(0, i - 1);
        edges.emplace_back(pick(rng), i);
    }
    while (static_cast<int>(edges.size()) < max_pipes && coin(rng) < 0.85) {
        std::uniform_int_distribution<int> pick(0, n - 1);
        int a = pick(rng), b = pick(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        edges.emplace_back(a, b);
    }
    std::vector<int> indeg(n, 0), outdeg(n, 0);
    for (auto [a, b] : edges) {
        ++outdeg[a];
        ++indeg[b];
    }
    std::vector<Node> nodes;
    std::map<std::string, double> inlets;
    for (int i = 0; i < n; ++i) {
        Node node;
        node.id = "n" + std::to_string(i);
        if (indeg[i] == 0) {
            node.kind = NodeKind::Inlet;
            inlets[node.id] = q(rng);
        } else if (outdeg[i] == 0) {
            node.kind = NodeKind::Outlet;
        } else {
            node.kind = NodeKind::Connecting;
        }
        nodes.push_back(node);
    }
    std::vector<Pipe> pipes;
    int id = 1;
    for (auto [a, b] : edges)
        pipes.push_back({id++, "n" + std::to_string(a), "n" + std::to_string(b), len(rng), rad(rng)});
    return PipeNetwork(nodes, pipes, inlets);
}

}  // namespace fixtures
