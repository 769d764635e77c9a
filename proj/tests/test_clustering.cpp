#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace mightloc;
using cluster::Matrix;
using cluster::Partition;

namespace {

// Pair-counting form of the adjusted Rand index.
double ari_by_pairs(const Partition& a, const Partition& b) {
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool x = a.same_cluster(i, j), y = b.same_cluster(i, j);
            (x && y ? n11 : x ? n10 : y ? n01 : n00) += 1;
        }
    const double den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    return den == 0.0 ? 1.0 : 2.0 * (n00 * n11 - n01 * n10) / den;
}

Matrix blocks(const std::vector<int>& sizes) {
    std::size_t n = 0;
    for (int s : sizes) n += static_cast<std::size_t>(s);
    Matrix A = cluster::square(n);
    std::size_t off = 0;
    for (int s : sizes) {
        for (std::size_t i = off; i < off + s; ++i)
            for (std::size_t j = off; j < off + s; ++j) A[i][j] = 1.0;
        off += static_cast<std::size_t>(s);
    }
    return A;
}

std::vector<double> gaussian(std::size_t n, double center, double width) {
    std::vector<double> h(n);
    for (std::size_t k = 0; k < n; ++k) h[k] = std::exp(-0.5 * std::pow((static_cast<double>(k) - center) / width, 2));
    return h;
}

}  // namespace

TEST(Binarize, ThresholdsAreInclusive) {
    const Matrix cm = {{0.36, 0.04}, {0.05, 0.9}};
    EXPECT_EQ(cluster::binarize_cm(cm), (Matrix{{1, 0}, {1, 1}}));
    const Matrix csm = {{1.0, 0.96}, {0.94, 0.95}};
    EXPECT_EQ(cluster::binarize_csm(csm), (Matrix{{1, 1}, {0, 1}}));
    const auto once = cluster::binarize(cm, 0.3);
    EXPECT_EQ(cluster::binarize(once, 0.3), once);
}

TEST(Csm, ShiftedCopiesAreIdentical) {
    cluster::CirGrid g;
    g.dt = 1.0;
    g.h = {gaussian(400, 100, 8), gaussian(400, 250, 8), gaussian(400, 100, 20)};
    const auto csm = cluster::build_csm(g);
    EXPECT_NEAR(csm[0][1], 1.0, 1e-9);
    EXPECT_NEAR(csm[0][0], 1.0, 1e-12);
    EXPECT_EQ(csm[0][2], csm[2][0]);
    // two Gaussians of width s1, s2: sqrt(2 s1 s2 / (s1^2 + s2^2))
    EXPECT_NEAR(csm[0][2], std::sqrt(2.0 * 8 * 20 / (64.0 + 400.0)), 1e-6);
    EXPECT_EQ(cluster::best_lag(g.h[0], g.h[1]), 150);
    EXPECT_EQ(cluster::best_lag(g.h[1], g.h[0]), -150);
}

TEST(Csm, DisjointSupportIsOrthogonalAtZeroLag) {
    cluster::CirGrid g;
    g.dt = 0.5;
    g.h = {std::vector<double>(100, 0.0), std::vector<double>(100, 0.0)};
    for (int k = 0; k < 20; ++k) {
        g.h[0][k] = 1.0 + k;
        g.h[1][60 + k] = 2.0;
    }
    EXPECT_EQ(cluster::build_csm(g, cluster::Alignment::ZeroLag)[0][1], 0.0);
    EXPECT_GT(cluster::build_csm(g)[0][1], 0.8);
}

TEST(Csm, MatchesBruteForceLagSearch) {
    const auto s = fixtures::scenario(fixtures::kTree);
    const auto grid = cluster::sample_on_grid(s.cirs, 2.0);
    const auto csm = cluster::build_csm(grid);
    const auto& a = grid.h[0];
    const auto& b = grid.h[1];
    const auto n = static_cast<std::ptrdiff_t>(a.size());
    double best = 0.0;
    for (std::ptrdiff_t lag = -n + 1; lag < n; ++lag) {
        double c = 0.0;
        for (std::ptrdiff_t k = 0; k < n; ++k)
            if (k - lag >= 0 && k - lag < n) c += a[k] * b[k - lag];
        best = std::max(best, c);
    }
    double na = 0, nb = 0;
    for (double v : a) na += v * v;
    for (double v : b) nb += v * v;
    EXPECT_NEAR(csm[0][1], best / std::sqrt(na * nb), 1e-9);
}

TEST(Distances, AlignedShiftedCopiesAreZero) {
    cluster::CirGrid g;
    g.dt = 0.5;
    g.h = {gaussian(300, 60, 5), gaussian(300, 200, 5), gaussian(300, 60, 5)};
    for (double& v : g.h[1]) v *= 7.0;  // max normalization removes the scale
    const auto d = cluster::cir_distances(g);
    EXPECT_NEAR(d[0][1], 0.0, 1e-9);
    EXPECT_NEAR(d[0][2], 0.0, 1e-12);
    const auto z = cluster::cir_distances(g, cluster::Alignment::ZeroLag);
    // disjoint unit-peak Gaussians: 2 * sqrt(pi) * width * dt
    EXPECT_NEAR(z[0][1], 2.0 * std::sqrt(kPi) * 5.0 * 0.5, 1e-6);
}

TEST(Partition, CanonicalLabels) {
    const Partition p({7, 7, 2, 9, 2});
    EXPECT_EQ(p.labels, (std::vector<int>{0, 0, 1, 2, 1}));
    EXPECT_EQ(p.cluster_count(), 3);
    EXPECT_EQ(Partition({1, 0}), Partition({5, 3}));
}

TEST(Modularity, TwoTrianglesSplitIsOneHalf) {
    Matrix A = blocks({3, 3});
    for (std::size_t i = 0; i < 6; ++i) A[i][i] = 0.0;
    EXPECT_NEAR(cluster::modularity(A, Partition({0, 0, 0, 1, 1, 1})), 0.5, 1e-15);
    EXPECT_NEAR(cluster::modularity(A, Partition({0, 0, 0, 0, 0, 0})), 0.0, 1e-15);
}

TEST(Louvain, ReferenceGraphs) {
    const Matrix I = blocks({1, 1, 1, 1, 1});
    EXPECT_EQ(cluster::louvain(I, false).cluster_count(), 5);
    EXPECT_EQ(cluster::louvain(I, true).cluster_count(), 5);
    EXPECT_EQ(cluster::louvain(blocks({4, 3}), false), Partition({0, 0, 0, 0, 1, 1, 1}));
    EXPECT_EQ(cluster::louvain(blocks({4, 3}), true), Partition({0, 0, 0, 0, 1, 1, 1}));
    EXPECT_EQ(cluster::louvain(blocks({6}), false).cluster_count(), 1);
}

TEST(Louvain, RecoversPlantedCommunities) {
    Rng rng(11);
    std::uniform_real_distribution<double> u;
    const std::vector<int> truth = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
    Matrix A = cluster::square(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = 0; j < truth.size(); ++j)
            A[i][j] = i == j || u(rng) < (truth[i] == truth[j] ? 0.9 : 0.03);
    EXPECT_EQ(cluster::louvain(A, true, 3), Partition(truth));
    EXPECT_EQ(cluster::louvain(A, false, 3), Partition(truth));
}

TEST(Louvain, NeverWorseThanSingletonsAndDeterministic) {
    Rng rng(5);
    std::uniform_real_distribution<double> u;
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 3 + rep % 20;
        Matrix A = cluster::square(n);
        for (auto& row : A)
            for (double& v : row) v = u(rng) < 0.3;
        for (bool directed : {false, true}) {
            const auto p = cluster::louvain(A, directed, 9);
            std::vector<int> single(n);
            std::iota(single.begin(), single.end(), 0);
            const Matrix& G = directed ? A : cluster::symmetrized(A);
            EXPECT_GE(cluster::modularity(G, p), cluster::modularity(G, Partition(single)) - 1e-12);
            EXPECT_EQ(p, cluster::louvain(A, directed, 9));
        }
    }
}

TEST(Ari, MatchesPairCountingOracle) {
    Rng rng(2);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 2 + rep % 15;
        std::uniform_int_distribution<int> k1(0, rep % 5), k2(0, rep % 4 + 1);
        std::vector<int> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = k1(rng);
            b[i] = k2(rng);
        }
        const Partition pa(a), pb(b);
        EXPECT_NEAR(cluster::adjusted_rand_index(pa, pb), ari_by_pairs(pa, pb), 1e-12);
        EXPECT_NEAR(cluster::adjusted_rand_index(pa, pb), cluster::adjusted_rand_index(pb, pa), 1e-12);
    }
    EXPECT_EQ(cluster::adjusted_rand_index(Partition({0, 0, 1, 2}), Partition({5, 5, 3, 1})), 1.0);
}

TEST(Silhouette, TwoTightGroups) {
    cluster::CirGrid g;
    g.dt = 1.0;
    for (double w : {5.0, 5.2, 5.4}) g.h.push_back(gaussian(600, 100, w));
    for (double w : {40.0, 41.0, 42.0}) g.h.push_back(gaussian(600, 300, w));
    const auto d = cluster::cir_distances(g);
    const Partition p({0, 0, 0, 1, 1, 1});
    EXPECT_GT(cluster::silhouette(p, d), 0.9);
    EXPECT_DOUBLE_EQ(cluster::silhouette(p, d), cluster::silhouette(Partition({1, 1, 1, 0, 0, 0}), d));
    EXPECT_LT(cluster::silhouette(Partition({0, 1, 0, 1, 0, 1}), d), 0.0);
}

TEST(Silhouette, DegenerateCases) {
    const Matrix zero = cluster::square(4);
    EXPECT_EQ(cluster::silhouette(Partition({0, 1, 0, 1}), zero), 0.0);
    EXPECT_EQ(cluster::silhouette(Partition({0, 0, 0, 0}), zero), 0.0);
    EXPECT_EQ(cluster::silhouette(Partition({0, 1, 2, 3}), zero), 0.0);
}

TEST(Silhouette, HandComputed) {
    // points on a line at 0, 1, 10 with clusters {0, 1}, {10}
    const Matrix d = {{0, 1, 10}, {1, 0, 9}, {10, 9, 0}};
    // s0 = (10 - 1) / 10, s1 = (9 - 1) / 9, singleton 0
    EXPECT_NEAR(cluster::silhouette(Partition({0, 0, 1}), d), (0.9 + 8.0 / 9.0) / 3.0, 1e-15);
}

TEST(KMeans, ReferenceCases) {
    const std::vector<double> x = {1.0, 1.2, 0.9, 50.0, 51.0, 100.0, 101.5};
    const auto all = cluster::kmeans_1d(x, 7);
    EXPECT_EQ(all.partition.cluster_count(), 7);
    EXPECT_EQ(all.inertia, 0.0);
    EXPECT_EQ(cluster::kmeans_1d(x, 1).partition.cluster_count(), 1);
    EXPECT_EQ(cluster::kmeans_1d(x, 3).partition, Partition({0, 0, 0, 1, 1, 2, 2}));
    EXPECT_THROW(cluster::kmeans_1d(x, 8), ValidationError);
    EXPECT_EQ(cluster::kmeans_1d(x, 3, 4).partition, cluster::kmeans_1d(x, 3, 4).partition);
}

TEST(KMeans, BaselineUsesMeanArrival) {
    const auto s = fixtures::scenario(fixtures::kTree);
    const auto r = cluster::kmeans_baseline(s.cirs, 2);
    std::vector<double> means;
    for (const auto& c : s.cirs) means.push_back(c.mean_arrival());
    EXPECT_EQ(r.partition, cluster::kmeans_1d(means, 2).partition);
}
