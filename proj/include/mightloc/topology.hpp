#pragma once

// Reader for the line-oriented topology format (grammar in docs/topology_format.md).

#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "channel.hpp"

namespace mightloc {

struct Topology {
    net::PipeNetwork network;
    std::vector<channel::TransmitterSpec> transmitters;  // ascending id
    std::optional<channel::ReceiverSpec> receiver;
    double diffusion = 0.2;                          // m^2/s
    double viscosity = net::kWaterViscosity20C;      // Pa s
    channel::ReleaseModel release;                   // shared by all transmitters
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double to_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end)
        throw ParseError("line " + std::to_string(line) + ": expected a number, got '" + s + "'");
    return v;
}

inline int to_int(const std::string& s, std::size_t line) {
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end)
        throw ParseError("line " + std::to_string(line) + ": expected an integer, got '" + s + "'");
    return v;
}

}  // namespace detail

inline Topology parse_topology(std::string_view text) {
    using detail::split_ws;
    using detail::to_double;
    using detail::to_int;

    std::vector<net::Node> nodes;
    std::vector<net::Pipe> pipes;
    std::map<std::string, double> inlets;
    Topology topo;
    std::string section;
    std::set<std::string> seen_sections;

    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        auto fail = [&](const std::string& what) -> ParseError {
            return ParseError("line " + std::to_string(lineno) + ": " + what);
        };
        if (tok[0].front() == '[') {
            if (tok.size() != 1 || tok[0].back() != ']') throw fail("malformed section header");
            section = tok[0].substr(1, tok[0].size() - 2);
            static const std::set<std::string> known = {"parameters", "nodes", "pipes", "inlets",
                                                        "transmitters", "receiver"};
            if (!known.count(section)) throw fail("unknown section [" + section + "]");
            if (!seen_sections.insert(section).second) throw fail("repeated section [" + section + "]");
            continue;
        }
        if (section.empty()) throw fail("content before first section header");

        if (section == "parameters") {
            if (tok[0] == "diffusion" && tok.size() == 2) {
                topo.diffusion = to_double(tok[1], lineno);
            } else if (tok[0] == "viscosity" && tok.size() == 2) {
                topo.viscosity = to_double(tok[1], lineno);
            } else if (tok[0] == "release" && tok.size() == 4 && tok[1] == "lognormal") {
                topo.release = channel::ReleaseModel::log_normal(to_double(tok[2], lineno), to_double(tok[3], lineno));
                if (!(topo.release.log_variance >= 0.0)) throw fail("release log-variance must be >= 0");
            } else if (tok[0] == "release" && tok.size() == 3 && tok[1] == "point") {
                topo.release = channel::ReleaseModel::point_mass(to_double(tok[2], lineno));
                if (!(topo.release.count > 0.0)) throw fail("release count must be > 0");
            } else {
                throw fail("unrecognized parameter line");
            }
        } else if (section == "nodes") {
            if (tok.size() != 2 && tok.size() != 4) throw fail("node line needs: id kind [x y]");
            net::Node n;
            n.id = tok[0];
            if (tok[1] == "inlet")
                n.kind = net::NodeKind::Inlet;
            else if (tok[1] == "outlet")
                n.kind = net::NodeKind::Outlet;
            else if (tok[1] == "connecting")
                n.kind = net::NodeKind::Connecting;
            else
                throw fail("unknown node kind '" + tok[1] + "'");
            if (tok.size() == 4) n.position = std::array<double, 2>{to_double(tok[2], lineno), to_double(tok[3], lineno)};
            nodes.push_back(std::move(n));
        } else if (section == "pipes") {
            if (tok.size() != 5) throw fail("pipe line needs: id source destination length_m radius_m");
            pipes.push_back({to_int(tok[0], lineno), tok[1], tok[2], to_double(tok[3], lineno), to_double(tok[4], lineno)});
        } else if (section == "inlets") {
            if (tok.size() != 2) throw fail("inlet line needs: node_id Q_m3_per_s");
            if (!inlets.emplace(tok[0], to_double(tok[1], lineno)).second) throw fail("duplicate inlet '" + tok[0] + "'");
        } else if (section == "transmitters") {
            if (tok.size() != 3) throw fail("transmitter line needs: id pipe_id z_m");
            channel::TransmitterSpec tx;
            tx.id = to_int(tok[0], lineno);
            tx.pipe = to_int(tok[1], lineno);
            tx.z = to_double(tok[2], lineno);
            topo.transmitters.push_back(tx);
        } else if (section == "receiver") {
            if (tok.size() != 3) throw fail("receiver line needs: pipe_id z_m length_m");
            if (topo.receiver) throw fail("only one receiver is supported");
            topo.receiver = channel::ReceiverSpec{to_int(tok[0], lineno), to_double(tok[1], lineno),
                                                  to_double(tok[2], lineno)};
        }
    }

    topo.network = net::PipeNetwork(std::move(nodes), std::move(pipes), std::move(inlets));
    if (!(topo.diffusion > 0.0)) throw ValidationError("diffusion must be > 0");
    if (!(topo.viscosity > 0.0)) throw ValidationError("viscosity must be > 0");

    std::sort(topo.transmitters.begin(), topo.transmitters.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < topo.transmitters.size(); ++i) {
        auto& tx = topo.transmitters[i];
        if (tx.id <= 0) throw ValidationError("transmitter ids must be positive");
        if (i > 0 && topo.transmitters[i - 1].id == tx.id)
            throw ValidationError("duplicate transmitter id " + std::to_string(tx.id));
        if (!topo.network.has_pipe(tx.pipe))
            throw ValidationError("transmitter " + std::to_string(tx.id) + " references unknown pipe " +
                                  std::to_string(tx.pipe));
        const double l = topo.network.pipe(tx.pipe).length;
        if (tx.z < 0.0 || tx.z > l)
            throw ValidationError("transmitter " + std::to_string(tx.id) + " position outside its pipe");
        tx.release = topo.release;
    }
    if (topo.receiver) {
        const auto& rx = *topo.receiver;
        if (!topo.network.has_pipe(rx.pipe))
            throw ValidationError("receiver references unknown pipe " + std::to_string(rx.pipe));
        const double l = topo.network.pipe(rx.pipe).length;
        if (!(rx.length > 0.0) || rx.length > l) throw ValidationError("receiver length must lie in (0, l_w]");
        if (rx.z < 0.5 * rx.length || rx.z > l - 0.5 * rx.length)
            throw ValidationError("receiver center must lie in [l_Rx/2, l_w - l_Rx/2]");
    }
    return topo;
}

/// Network part only.
inline net::PipeNetwork load_network(std::string_view text) { return parse_topology(text).network; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Topology load_topology_file(const std::string& path) { return parse_topology(read_file(path)); }

}  // namespace mightloc
