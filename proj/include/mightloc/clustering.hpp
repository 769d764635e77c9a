#pragma once

// Transmitter clustering: similarity graphs, Louvain communities, and the
// silhouette / adjusted-Rand quality measures.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "channel.hpp"
#include "fft.hpp"

namespace mightloc::cluster {

using Matrix = std::vector<std::vector<double>>;

inline constexpr double kCmThreshold = 0.05;
inline constexpr double kCsmThreshold = 0.95;

inline Matrix square(std::size_t n, double fill = 0.0) { return Matrix(n, std::vector<double>(n, fill)); }

/// Entry 1 iff value >= threshold.
inline Matrix binarize(const Matrix& m, double threshold) {
    Matrix out = m;
    for (auto& row : out)
        for (double& v : row) v = v >= threshold ? 1.0 : 0.0;
    return out;
}
inline Matrix binarize_cm(const Matrix& cm) { return binarize(cm, kCmThreshold); }
inline Matrix binarize_csm(const Matrix& csm) { return binarize(csm, kCsmThreshold); }

// ---------------------------------------------------------------------------
// CIRs on a common grid

struct CirGrid {
    double dt = 0.0;
    std::vector<std::vector<double>> h;  // h[g][k] = h_g(k dt)
};

/// Step: min(0.5 s, smallest component standard deviation / 20); the grid
/// reaches the latest 1 - 1e-9 quantile.
inline CirGrid sample_on_grid(std::span<const channel::ChannelResponse> cirs, double dt = 0.0) {
    if (cirs.empty()) throw ValidationError("empty CIR bank");
    double horizon = 0.0;
    double step = 0.5;
    for (const auto& c : cirs) {
        if (!c.reachable()) throw ChannelError("transmitter " + std::to_string(c.tx) + " has a zero-energy CIR");
        horizon = std::max(horizon, c.horizon(1.0 - 1e-9));
        for (const auto& comp : c.components) step = std::min(step, std::sqrt(comp.variance) / 20.0);
    }
    CirGrid grid;
    grid.dt = dt > 0.0 ? dt : step;
    const auto n = static_cast<std::size_t>(std::ceil(horizon / grid.dt)) + 1;
    for (const auto& c : cirs) grid.h.push_back(c.sample(grid.dt, n));
    return grid;
}

inline std::vector<double> max_normalized(std::span<const double> x) {
    const double peak = *std::max_element(x.begin(), x.end());
    if (!(peak > 0.0)) throw SignalError("zero-energy CIR");
    std::vector<double> out(x.begin(), x.end());
    for (double& v : out) v /= peak;
    return out;
}

namespace detail {

/// Cross-correlation c[s] = sum_k a[k] b[k - s] for all lags, via one FFT size n.
struct Correlator {
    std::size_t len = 0, n = 0;
    std::vector<std::vector<fft::Complex>> spec;

    explicit Correlator(const std::vector<std::vector<double>>& xs) {
        for (const auto& x : xs) len = std::max(len, x.size());
        n = fft::good_size(2 * len - 1);
        for (const auto& x : xs) spec.push_back(fft::rfft(x, n));
    }

    /// Returns (max correlation, lag s maximizing it); s < 0 when b lags a.
    std::pair<double, std::ptrdiff_t> best(std::size_t a, std::size_t b) const {
        std::vector<fft::Complex> prod(spec[a].size());
        for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = spec[a][k] * std::conj(spec[b][k]);
        const auto c = fft::irfft(prod, n);
        double top = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t lag = 0;
        // lags 0..len-1 sit at c[0..], negative lags wrap to the end
        for (std::size_t k = 0; k < n; ++k) {
            const auto s = k < len ? static_cast<std::ptrdiff_t>(k) : static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(n);
            if (s <= -static_cast<std::ptrdiff_t>(len)) continue;
            if (c[k] > top || (c[k] == top && std::abs(s) < std::abs(lag))) {
                top = c[k];
                lag = s;
            }
        }
        return {top, lag};
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) s += a[k] * b[k];
    return s;
}

}  // namespace detail

enum class Alignment { MaxLag, ZeroLag };

/// Pairwise cosine similarity of the CIRs; with MaxLag the best integer grid
/// lag is used for every pair.
inline Matrix build_csm(const CirGrid& grid, Alignment align = Alignment::MaxLag) {
    const std::size_t U = grid.h.size();
    std::vector<double> norm(U);
    for (std::size_t i = 0; i < U; ++i) {
        norm[i] = std::sqrt(detail::dot(grid.h[i], grid.h[i]));
        if (!(norm[i] > 0.0)) throw SignalError("zero-energy CIR");
    }
    Matrix csm = square(U);
    std::unique_ptr<detail::Correlator> corr;
    if (align == Alignment::MaxLag) corr = std::make_unique<detail::Correlator>(grid.h);
    for (std::size_t i = 0; i < U; ++i) {
        csm[i][i] = 1.0;
        for (std::size_t j = i + 1; j < U; ++j) {
            const double c = align == Alignment::MaxLag ? corr->best(i, j).first : detail::dot(grid.h[i], grid.h[j]);
            csm[i][j] = csm[j][i] = std::clamp(c / (norm[i] * norm[j]), -1.0, 1.0);
        }
    }
    return csm;
}

/// Squared L2 distance between max-normalized CIRs (rectangle rule), minimized
/// over integer lags when align == MaxLag.
inline Matrix cir_distances(const CirGrid& grid, Alignment align = Alignment::MaxLag) {
    const std::size_t U = grid.h.size();
    std::vector<std::vector<double>> nh;
    for (const auto& h : grid.h) nh.push_back(max_normalized(h));
    std::vector<double> energy(U);
    for (std::size_t i = 0; i < U; ++i) energy[i] = detail::dot(nh[i], nh[i]);
    std::unique_ptr<detail::Correlator> corr;
    if (align == Alignment::MaxLag) corr = std::make_unique<detail::Correlator>(nh);
    Matrix d = square(U);
    for (std::size_t i = 0; i < U; ++i)
        for (std::size_t j = i + 1; j < U; ++j) {
            const double c = align == Alignment::MaxLag ? corr->best(i, j).first : detail::dot(nh[i], nh[j]);
            d[i][j] = d[j][i] = std::max(0.0, energy[i] + energy[j] - 2.0 * c) * grid.dt;
        }
    return d;
}

/// Delay of CIR b relative to CIR a in grid steps, by maximum cross-correlation.
inline std::ptrdiff_t best_lag(std::span<const double> a, std::span<const double> b) {
    detail::Correlator corr({std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end())});
    return -corr.best(0, 1).second;
}

// ---------------------------------------------------------------------------
// Partitions

struct Partition {
    std::vector<int> labels;  // 0..k-1, numbered by first appearance

    Partition() = default;
    explicit Partition(std::vector<int> raw) : labels(std::move(raw)) { canonicalize(); }

    std::size_t size() const { return labels.size(); }
    int cluster_count() const {
        return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    }
    bool same_cluster(std::size_t a, std::size_t b) const { return labels[a] == labels[b]; }

    void canonicalize() {
        std::vector<int> seen;
        for (int& l : labels) {
            auto it = std::find(seen.begin(), seen.end(), l);
            if (it == seen.end()) {
                seen.push_back(l);
                l = static_cast<int>(seen.size()) - 1;
            } else {
                l = static_cast<int>(it - seen.begin());
            }
        }
    }

    bool operator==(const Partition&) const = default;
};

/// Modularity sum_ij [A_ij - k_i^out k_j^in / m] delta(c_i, c_j) / m over the
/// off-diagonal entries. For a symmetric matrix this is the usual undirected
/// modularity.
inline double modularity(const Matrix& input, const Partition& p) {
    const std::size_t n = input.size();
    Matrix A = input;
    for (std::size_t i = 0; i < n; ++i) A[i][i] = 0.0;
    double m = 0.0;
    std::vector<double> kout(n, 0.0), kin(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            kout[i] += A[i][j];
            kin[j] += A[i][j];
            m += A[i][j];
        }
    if (!(m > 0.0)) return 0.0;
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (p.labels[i] == p.labels[j]) q += A[i][j] - kout[i] * kin[j] / m;
    return q / m;
}

inline Matrix symmetrized(const Matrix& A) {
    Matrix s = A;
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = 0; j < A.size(); ++j) s[i][j] = 0.5 * (A[i][j] + A[j][i]);
    return s;
}

/// Two-phase Louvain iteration (local moves, then aggregation) on a weighted
/// graph. Directed graphs use the directed modularity; undirected ones are
/// symmetrized first. The diagonal is ignored: with self-loops counted, every
/// partition of the all-ones matrix has modularity 0. Node visiting order is a
/// seeded permutation.
inline Partition louvain(const Matrix& input, bool directed, std::uint64_t seed = 1) {
    const std::size_t U = input.size();
    for (const auto& row : input)
        if (row.size() != U) throw ValidationError("louvain needs a square matrix");
    if (U == 0) return {};
    Matrix W = directed ? input : symmetrized(input);
    for (std::size_t i = 0; i < U; ++i) W[i][i] = 0.0;
    for (const auto& row : W)
        for (double v : row)
            if (v < 0.0) throw ValidationError("louvain needs non-negative weights");

    std::vector<int> membership(U);
    std::iota(membership.begin(), membership.end(), 0);
    double m = 0.0;
    for (const auto& row : W)
        for (double v : row) m += v;
    if (!(m > 0.0)) return Partition(membership);

    Rng rng = make_rng(seed, 0);
    while (true) {
        const std::size_t n = W.size();
        std::vector<double> kout(n, 0.0), kin(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                kout[i] += W[i][j];
                kin[j] += W[i][j];
            }
        std::vector<int> comm(n);
        std::iota(comm.begin(), comm.end(), 0);
        std::vector<double> tot_out = kout, tot_in = kin;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng)]);
        }

        bool moved_any = false;
        std::vector<double> link(n);
        for (bool improved = true; improved;) {
            improved = false;
            for (std::size_t i : order) {
                const int own = comm[i];
                tot_out[own] -= kout[i];
                tot_in[own] -= kin[i];
                std::fill(link.begin(), link.end(), 0.0);
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) link[comm[j]] += W[i][j] + W[j][i];
                auto gain = [&](int c) {
                    return link[c] / m - (kout[i] * tot_in[c] + kin[i] * tot_out[c]) / (m * m);
                };
                int best = own;
                double best_gain = gain(own);
                for (std::size_t j = 0; j < n; ++j) {
                    const int c = comm[j];
                    if (j == i || c == best || link[c] <= 0.0) continue;
                    const double g = gain(c);
                    if (g > best_gain + 1e-14) {
                        best_gain = g;
                        best = c;
                    }
                }
                comm[i] = best;
                tot_out[best] += kout[i];
                tot_in[best] += kin[i];
                if (best != own) improved = moved_any = true;
            }
        }
        if (!moved_any) break;

        Partition level(comm);
        const int k = level.cluster_count();
        for (int& mship : membership) mship = level.labels[static_cast<std::size_t>(mship)];
        Matrix next = square(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) next[level.labels[i]][level.labels[j]] += W[i][j];
        W = std::move(next);
        if (static_cast<std::size_t>(k) == n) break;
    }
    return Partition(membership);
}

/// Mean silhouette over all points. Singletons score 0; a point whose a and b
/// are both zero scores 0; a single cluster scores 0.
inline double silhouette(const Partition& p, const Matrix& dist) {
    const std::size_t n = p.size();
    if (dist.size() != n) throw ValidationError("silhouette: size mismatch");
    const int k = p.cluster_count();
    if (n == 0) return 0.0;
    if (k < 2) return 0.0;
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : p.labels) ++sizes[static_cast<std::size_t>(l)];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(p.labels[i]);
        if (sizes[own] < 2) continue;
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum[static_cast<std::size_t>(p.labels[j])] += dist[i][j];
        const double a = sum[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sum.size(); ++c)
            if (c != own) b = std::min(b, sum[c] / static_cast<double>(sizes[c]));
        const double den = std::max(a, b);
        total += den > 0.0 ? (b - a) / den : 0.0;
    }
    return total / static_cast<double>(n);
}

/// Hubert-Arabie adjusted Rand index. Two partitions with no pair structure to
/// compare (both all-singletons or both one cluster) score 1.
inline double adjusted_rand_index(const Partition& p1, const Partition& p2) {
    if (p1.size() != p2.size()) throw ValidationError("ARI: partitions differ in size");
    const std::size_t n = p1.size();
    if (n < 2) return 1.0;
    const auto k1 = static_cast<std::size_t>(p1.cluster_count());
    const auto k2 = static_cast<std::size_t>(p2.cluster_count());
    std::vector<std::vector<double>> table(k1, std::vector<double>(k2, 0.0));
    for (std::size_t i = 0; i < n; ++i) table[p1.labels[i]][p2.labels[i]] += 1.0;
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0;
    std::vector<double> a(k1, 0.0), b(k2, 0.0);
    for (std::size_t i = 0; i < k1; ++i)
        for (std::size_t j = 0; j < k2; ++j) {
            index += pairs(table[i][j]);
            a[i] += table[i][j];
            b[j] += table[i][j];
        }
    double sa = 0.0, sb = 0.0;
    for (double x : a) sa += pairs(x);
    for (double x : b) sb += pairs(x);
    const double expected = sa * sb / pairs(static_cast<double>(n));
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

struct KMeansResult {
    Partition partition;
    std::vector<double> centers;
    double inertia = 0.0;
};

/// 1-D K-means: k-means++ seeding, Lloyd iterations, best of `restarts` runs.
inline KMeansResult kmeans_1d(std::span<const double> x, int k, std::uint64_t seed = 1, int restarts = 100) {
    const std::size_t n = x.size();
    if (k < 1 || static_cast<std::size_t>(k) > n) throw ValidationError("kmeans needs 1 <= k <= number of points");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < restarts; ++run) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(run));
        std::vector<double> centers;
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        centers.push_back(x[first(rng)]);
        std::vector<double> d2(n);
        while (centers.size() < static_cast<std::size_t>(k)) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = std::numeric_limits<double>::infinity();
                for (double c : centers) d = std::min(d, (x[i] - c) * (x[i] - c));
                d2[i] = d;
                total += d;
            }
            std::size_t chosen = 0;
            if (total > 0.0) {
                const double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (d2[i] == 0.0) continue;
                    chosen = i;
                    acc += d2[i];
                    if (acc > pick) break;
                }
            } else {
                chosen = first(rng);
            }
            centers.push_back(x[chosen]);
        }
        std::vector<int> label(n, -1);
        for (int iter = 0; iter < 300; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int arg = 0;
                for (int c = 1; c < k; ++c)
                    if (std::abs(x[i] - centers[c]) < std::abs(x[i] - centers[arg])) arg = c;
                if (label[i] != arg) {
                    label[i] = arg;
                    changed = true;
                }
            }
            if (!changed) break;
            std::vector<double> sum(static_cast<std::size_t>(k), 0.0), cnt(static_cast<std::size_t>(k), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                sum[label[i]] += x[i];
                cnt[label[i]] += 1.0;
            }
            for (int c = 0; c < k; ++c)
                if (cnt[c] > 0.0) centers[c] = sum[c] / cnt[c];
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) inertia += (x[i] - centers[label[i]]) * (x[i] - centers[label[i]]);
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.partition = Partition(label);
            best.centers = centers;
        }
    }
    return best;
}

/// K-means on the weighted mean arrival time of each CIR.
inline KMeansResult kmeans_baseline(std::span<const channel::ChannelResponse> cirs, int k, std::uint64_t seed = 1) {
    std::vector<double> means;
    for (const auto& c : cirs) means.push_back(c.mean_arrival());
    return kmeans_1d(means, k, seed);
}

}  // namespace mightloc::cluster
