#pragma once

// Closed-form channel model: every Tx->Rx path contributes an inverse-Gaussian
// first-passage-time density; the impulse response is their flow-weighted sum.

#include <array>
#include <cmath>
#include <vector>

#include "netgraph.hpp"

namespace mightloc::channel {

/// Distribution of the number of molecules released by one impulsive emission.
struct ReleaseModel {
    enum class Kind { LogNormal, PointMass };
    Kind kind = Kind::LogNormal;
    double log_mean = 18.69;     // mean of ln M (LogNormal)
    double log_variance = 2.46;  // variance of ln M (LogNormal)
    double count = 1.0;          // PointMass value

    static ReleaseModel point_mass(double m) { return {Kind::PointMass, 0.0, 0.0, m}; }
    static ReleaseModel log_normal(double mu, double var) { return {Kind::LogNormal, mu, var, 1.0}; }

    /// E[M].
    double mean() const {
        return kind == Kind::PointMass ? count : std::exp(log_mean + 0.5 * log_variance);
    }
};

struct TransmitterSpec {
    int id = 0;
    int pipe = 0;        // pipe id q
    double z = 0.0;      // position along pipe q, m
    ReleaseModel release;
};

struct ReceiverSpec {
    int pipe = 0;        // pipe id w
    double z = 0.0;      // center position along pipe w, m
    double length = 0.0; // m
};

/// One path's contribution. scale() is variance / mean.
struct IGComponent {
    double weight = 1.0;
    double mean = 0.0;      // s
    double variance = 0.0;  // s^2

    double scale() const { return variance / mean; }
};

struct PipeMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Transit-time moments to position z (m) inside a pipe.
inline PipeMoments pipe_moments(const net::FlowField& flow, int pipe_id, double z) {
    const std::size_t i = flow.pos(pipe_id);
    const double l = flow.network.pipes()[i].length;
    if (z < 0.0 || z > l * (1.0 + 1e-12))
        throw ChannelError("position " + std::to_string(z) + " outside pipe " + std::to_string(pipe_id));
    const double u = flow.velocity[i];
    if (!(u > 0.0)) throw ChannelError("pipe " + std::to_string(pipe_id) + " carries no flow");
    return {z / u, 2.0 * flow.dispersion[i] * z / (u * u * u)};
}

/// Moments of one Tx->Rx path: the partial Tx pipe, every intermediate pipe in
/// full, and the Rx pipe up to z_Rx.
inline IGComponent path_moments(const net::FlowField& flow, const net::Path& path,
                                const TransmitterSpec& tx, double rx_z, int rx_pipe) {
    if (!path.contains(tx.pipe))
        throw ChannelError("path does not contain transmitter pipe " + std::to_string(tx.pipe));
    if (!path.contains(rx_pipe))
        throw ChannelError("path does not contain receiver pipe " + std::to_string(rx_pipe));
    IGComponent c;
    c.weight = path.weight;
    for (int id : path.pipes) {
        const double l = flow.network.pipe(id).length;
        PipeMoments m;
        if (id == tx.pipe)
            m = pipe_moments(flow, id, l - tx.z);
        else if (id == rx_pipe)
            m = pipe_moments(flow, id, rx_z);
        else
            m = pipe_moments(flow, id, l);
        c.mean += m.mean;
        c.variance += m.variance;
    }
    if (!(c.mean > 0.0) || !(c.variance > 0.0))
        throw ChannelError("degenerate path moments (zero transit distance)");
    return c;
}

/// Inverse-Gaussian first-passage density with the given mean and scale (1/s).
/// The path weight is not applied.
inline double ig_density(double mean, double scale, double t) {
    if (!(t > 0.0)) return 0.0;
    const double d = t - mean;
    const double expo = -d * d / (2.0 * scale * t);
    if (expo < -745.0) return 0.0;
    const double v = mean / std::sqrt(2.0 * kPi * scale * t * t * t) * std::exp(expo);
    return v < 1e-300 ? 0.0 : v;
}

inline double ig_flux(const IGComponent& c, double t) { return ig_density(c.mean, c.scale(), t); }

namespace detail {

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Mills ratio Phi(-x) / phi(x) for x >= 0.
inline double mills_ratio(double x) {
    if (x < 35.0)
        return 0.5 * std::erfc(x / std::numbers::sqrt2) * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
    const double r = 1.0 / (x * x);
    return (1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)))) / x;
}

}  // namespace detail

/// P(T <= t) for the inverse-Gaussian first-passage time.
inline double ig_cdf(double mean, double scale, double t) {
    if (!(t > 0.0)) return 0.0;
    const double s = std::sqrt(scale * t);
    const double a = (t - mean) / s;
    const double b = (t + mean) / s;
    // exp(2 mean/scale) Phi(-b) == phi(a) * mills(b); avoids the overflowing factor.
    const double tail = detail::norm_pdf(a) * detail::mills_ratio(b);
    if (a <= 0.0) return std::min(1.0, detail::norm_cdf(a) + tail);
    return 1.0 - detail::norm_pdf(a) * (detail::mills_ratio(a) - detail::mills_ratio(b));
}

/// P(T > t), accurate far into the right tail.
inline double ig_survival(double mean, double scale, double t) {
    if (!(t > 0.0)) return 1.0;
    const double s = std::sqrt(scale * t);
    const double a = (t - mean) / s;
    const double b = (t + mean) / s;
    if (a <= 0.0) return 1.0 - ig_cdf(mean, scale, t);
    return std::max(0.0, detail::norm_pdf(a) * (detail::mills_ratio(a) - detail::mills_ratio(b)));
}

/// Time by which a fraction p of the IG mass has arrived (bisection on the CDF).
inline double ig_quantile(double mean, double scale, double p) {
    if (!(p > 0.0 && p < 1.0)) throw ChannelError("quantile level must lie in (0, 1)");
    const double sd = std::sqrt(scale * mean);
    double lo = 0.0, hi = mean + 4.0 * sd;
    const double tail = 1.0 - p;
    const bool upper = p > 0.5;
    auto below = [&](double t) {
        return upper ? ig_survival(mean, scale, t) > tail : ig_cdf(mean, scale, t) < p;
    };
    while (below(hi)) {
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (below(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Impulse response between one transmitter and the receiver.
struct ChannelResponse {
    int tx = 0;
    ReceiverSpec rx;
    std::vector<IGComponent> components;

    bool reachable() const { return !components.empty(); }

    double total_weight() const {
        double s = 0.0;
        for (const auto& c : components) s += c.weight;
        return s;
    }

    /// h(t) in 1/s.
    double operator()(double t) const {
        double h = 0.0;
        for (const auto& c : components) h += c.weight * ig_flux(c, t);
        return h;
    }

    /// Molecule-fraction-weighted mean arrival time.
    double mean_arrival() const {
        double s = 0.0, w = 0.0;
        for (const auto& c : components) {
            s += c.weight * c.mean;
            w += c.weight;
        }
        return w > 0.0 ? s / w : 0.0;
    }

    /// Time by which every component has delivered the fraction `mass` of its molecules.
    double horizon(double mass = 0.9999) const {
        double t = 0.0;
        for (const auto& c : components) t = std::max(t, ig_quantile(c.mean, c.scale(), mass));
        return t;
    }

    /// h on the grid t_k = k * dt, k = 0..n-1.
    std::vector<double> sample(double dt, std::size_t n) const {
        std::vector<double> out(n);
        for (std::size_t k = 0; k < n; ++k) out[k] = (*this)(static_cast<double>(k) * dt);
        return out;
    }
};

inline void validate(const net::FlowField& flow, const TransmitterSpec& tx, const ReceiverSpec& rx) {
    const auto& net = flow.network;
    if (!net.has_pipe(tx.pipe))
        throw ChannelError("transmitter " + std::to_string(tx.id) + " references unknown pipe");
    if (!net.has_pipe(rx.pipe)) throw ChannelError("receiver references unknown pipe");
    const double lq = net.pipe(tx.pipe).length;
    const double lw = net.pipe(rx.pipe).length;
    if (tx.z < 0.0 || tx.z > lq)
        throw ChannelError("transmitter " + std::to_string(tx.id) + " position outside its pipe");
    if (!(rx.length > 0.0) || rx.length > lw) throw ChannelError("receiver length must lie in (0, l_w]");
    const double tol = 1e-12 * lw;
    if (rx.z < 0.5 * rx.length - tol || rx.z > lw - 0.5 * rx.length + tol)
        throw ChannelError("receiver center must lie in [l_Rx/2, l_w - l_Rx/2]");
    if (tx.pipe == rx.pipe) throw ChannelError("transmitter and receiver must be in different pipes");
}

/// One component per path from the Tx pipe's source node to the Rx pipe's
/// destination node that passes through both pipes. An unreachable receiver
/// yields a response with no components.
inline ChannelResponse channel_response(const net::FlowField& flow, const TransmitterSpec& tx,
                                        const ReceiverSpec& rx) {
    validate(flow, tx, rx);
    const auto& net = flow.network;
    ChannelResponse resp;
    resp.tx = tx.id;
    resp.rx = rx;
    const auto paths = net::enumerate_paths(flow, net.pipe(tx.pipe).source, net.pipe(rx.pipe).destination);
    for (const auto& p : paths)
        if (p.contains(tx.pipe) && p.contains(rx.pipe))
            resp.components.push_back(path_moments(flow, p, tx, rx.z, rx.pipe));
    return resp;
}

enum class ObservationModel { Uniform, Exact };

/// Expected number of molecules inside the receiver at time t for a release of m
/// molecules, under the uniform-concentration approximation.
inline double expected_observation(const ChannelResponse& resp, const net::FlowField& flow, double m,
                                   double t) {
    const double u = flow.velocity_of(resp.rx.pipe);
    if (!(u > 0.0)) throw ChannelError("receiver pipe carries no flow");
    return m * resp.rx.length / u * resp(t);
}

/// Same quantity with the response integrated over the receiver extent
/// (20-point Gauss-Legendre). Moments are affine in the Rx position, so each
/// component is shifted rather than recomputed.
inline double expected_observation_exact(const ChannelResponse& resp, const net::FlowField& flow, double m,
                                         double t) {
    static constexpr std::array<double, 10> x = {
        0.0765265211334973, 0.2277858511416451, 0.3737060887154195, 0.5108670019508271,
        0.6360536807265150, 0.7463319064601508, 0.8391169718222188, 0.9122344282513259,
        0.9639719272779138, 0.9931285991850949};
    static constexpr std::array<double, 10> w = {
        0.1527533871307258, 0.1491729864726037, 0.1420961093183820, 0.1316886384491766,
        0.1181945319615184, 0.1019301198172404, 0.0832767415767048, 0.0626720483341091,
        0.0406014298003869, 0.0176140071391521};
    const std::size_t i = flow.pos(resp.rx.pipe);
    const double u = flow.velocity[i];
    if (!(u > 0.0)) throw ChannelError("receiver pipe carries no flow");
    const double dbar = flow.dispersion[i];
    const double half = 0.5 * resp.rx.length;
    auto h_at = [&](double dz) {
        double h = 0.0;
        for (const auto& c : resp.components) {
            const double mean = c.mean + dz / u;
            const double var = c.variance + 2.0 * dbar * dz / (u * u * u);
            if (mean > 0.0 && var > 0.0) h += c.weight * ig_density(mean, var / mean, t);
        }
        return h;
    };
    double integral = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
        integral += w[k] * (h_at(half * x[k]) + h_at(-half * x[k]));
    integral *= half;
    return m / u * integral;
}

}  // namespace mightloc::channel
