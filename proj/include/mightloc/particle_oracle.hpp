#pragma once

// Monte Carlo ground truth for the channel model: individual molecules walk the
// network pipe by pipe, drawing their transit time through each pipe.

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "channel.hpp"

namespace mightloc::oracle {

enum class Sampler { InverseGaussian, EulerMaruyama };

struct ParticleConfig {
    std::size_t count = 100000;
    std::uint64_t seed = 1;
    Sampler sampler = Sampler::InverseGaussian;
    double dt = 0.05;       // s, EulerMaruyama step
    unsigned workers = 0;   // 0 = hardware concurrency
};

struct ParticleResult {
    std::vector<double> arrivals;                 // s, in particle order, arrived particles only
    std::size_t lost = 0;                         // left the network without reaching the Rx
    std::map<std::vector<int>, std::size_t> routes;  // pipe sequence -> arrivals along it

    std::size_t launched() const { return arrivals.size() + lost; }
    double arrival_fraction() const {
        return launched() ? static_cast<double>(arrivals.size()) / static_cast<double>(launched()) : 0.0;
    }
};

/// Inverse-Gaussian variate with the given mean and shape lambda
/// (Michael, Schucany and Haas transformation with one root choice).
template <class Engine>
double sample_inverse_gaussian(Engine& rng, double mean, double shape) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    const double nu = normal(rng);
    const double y = nu * nu;
    const double my = mean * y;
    // mean + mean^2 y/(2 shape) - mean/(2 shape) sqrt(4 mean shape y + mean^2 y^2), rearranged
    // to avoid cancellation when shape >> mean.
    const double x = mean - 2.0 * mean * my / (std::sqrt(4.0 * mean * shape * y + my * my) + my);
    return uniform(rng) <= mean / (mean + x) ? x : mean * mean / x;
}

/// First time a drift-diffusion walker started at 0 passes `distance`, with
/// crossing time linearly interpolated inside the final step.
template <class Engine>
double sample_euler_maruyama(Engine& rng, double distance, double velocity, double dispersion, double dt) {
    std::normal_distribution<double> normal;
    const double step_sd = std::sqrt(2.0 * dispersion * dt);
    double x = 0.0, t = 0.0;
    while (true) {
        const double prev = x;
        x += velocity * dt + step_sd * normal(rng);
        t += dt;
        if (x >= distance) return t - dt * (x - distance) / (x - prev);
    }
}

inline constexpr std::size_t kChunk = 4096;

/// Launches cfg.count molecules from the transmitter and records their first
/// passage through the receiver center. RNG streams are fixed per chunk of
/// kChunk particles, so output does not depend on the worker count.
inline ParticleResult simulate_particles(const net::FlowField& flow, const channel::TransmitterSpec& tx,
                                         const channel::ReceiverSpec& rx, const ParticleConfig& cfg) {
    channel::validate(flow, tx, rx);
    if (cfg.count < 1) throw ValidationError("particle count must be >= 1");
    if (cfg.sampler == Sampler::EulerMaruyama && !(cfg.dt > 0.0))
        throw ValidationError("Euler-Maruyama step must be > 0");

    const auto& net = flow.network;
    const std::size_t n_chunks = (cfg.count + kChunk - 1) / kChunk;
    std::vector<ParticleResult> parts(n_chunks);

    auto transit = [&](Rng& rng, std::size_t pipe, double distance) {
        const double u = flow.velocity[pipe];
        const double dbar = flow.dispersion[pipe];
        if (cfg.sampler == Sampler::EulerMaruyama) return sample_euler_maruyama(rng, distance, u, dbar, cfg.dt);
        const double mean = distance / u;
        const double var = 2.0 * dbar * distance / (u * u * u);
        return sample_inverse_gaussian(rng, mean, mean * mean * mean / var);
    };

    parallel_for(n_chunks, [&](std::size_t chunk) {
        Rng rng = make_rng(cfg.seed, chunk);
        std::uniform_real_distribution<double> uniform;
        ParticleResult& out = parts[chunk];
        const std::size_t begin = chunk * kChunk;
        const std::size_t end = std::min(cfg.count, begin + kChunk);
        std::vector<int> route;
        for (std::size_t p = begin; p < end; ++p) {
            std::size_t pipe = net.pipe_index(tx.pipe);
            double t = 0.0;
            if (flow.velocity[pipe] <= 0.0) {
                ++out.lost;
                continue;
            }
            route.assign(1, tx.pipe);
            t += transit(rng, pipe, net.pipes()[pipe].length - tx.z);
            bool arrived = false;
            while (true) {
                const std::size_t node = net.node_index(net.pipes()[pipe].destination);
                const auto& outs = net.out_pipes(node);
                double total = 0.0;
                for (std::size_t o : outs) total += flow.flow[o];
                if (outs.empty() || !(total > 0.0)) break;
                std::size_t next = outs.front();
                if (outs.size() > 1) {
                    double pick = uniform(rng) * total;
                    for (std::size_t o : outs) {
                        next = o;
                        pick -= flow.flow[o];
                        if (pick < 0.0) break;
                    }
                }
                pipe = next;
                route.push_back(net.pipes()[pipe].id);
                if (net.pipes()[pipe].id == rx.pipe) {
                    t += transit(rng, pipe, rx.z);
                    arrived = true;
                    break;
                }
                t += transit(rng, pipe, net.pipes()[pipe].length);
            }
            if (arrived) {
                out.arrivals.push_back(t);
                ++out.routes[route];
            } else {
                ++out.lost;
            }
        }
    }, cfg.workers);

    ParticleResult result;
    result.arrivals.reserve(cfg.count);
    for (auto& part : parts) {
        result.arrivals.insert(result.arrivals.end(), part.arrivals.begin(), part.arrivals.end());
        result.lost += part.lost;
        for (const auto& [r, c] : part.routes) result.routes[r] += c;
    }
    return result;
}

struct Histogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& samples, double lo, double hi, std::size_t bins) {
    if (!(hi > lo) || bins == 0) throw ValidationError("histogram needs hi > lo and bins > 0");
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double s : samples) {
        if (s < lo || s >= hi) continue;
        const auto b = std::min(bins - 1, static_cast<std::size_t>((s - lo) / width));
        ++h.counts[b];
    }
    return h;
}

}  // namespace mightloc::oracle
