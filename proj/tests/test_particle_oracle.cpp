#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <mightloc/particle_oracle.hpp>

#include "fixtures.hpp"

using namespace mightloc;

namespace {

double l1_distance(const oracle::ParticleResult& r, const channel::ChannelResponse& h, double lo, double hi,
                   std::size_t bins) {
    const auto hist = oracle::histogram(r.arrivals, lo, hi, bins);
    const double n = static_cast<double>(r.launched());
    double dist = 0.0, mass = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        // analytic bin probability from the IG CDFs
        double p = 0.0;
        for (const auto& c : h.components)
            p += c.weight * (channel::ig_cdf(c.mean, c.scale(), hist.edges[b + 1]) -
                             channel::ig_cdf(c.mean, c.scale(), hist.edges[b]));
        dist += std::abs(static_cast<double>(hist.counts[b]) / n - p);
        mass += p;
    }
    return dist / mass;
}

}  // namespace

TEST(Sampler, InverseGaussianMomentsWithinClt) {
    Rng rng(5);
    const double mean = 120.0, shape = 900.0;  // variance = mean^3 / shape
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = oracle::sample_inverse_gaussian(rng, mean, shape);
        s += x;
        s2 += x * x;
    }
    const double m = s / n, var = s2 / n - m * m;
    const double var_true = mean * mean * mean / shape;
    EXPECT_NEAR(m, mean, 4.0 * std::sqrt(var_true / n));
    EXPECT_NEAR(var / var_true, 1.0, 0.03);
}

TEST(Sampler, LargeShapeDoesNotLosePrecision) {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double x = oracle::sample_inverse_gaussian(rng, 1000.0, 1e12);
        EXPECT_NEAR(x, 1000.0, 1.0);
    }
}

TEST(Sampler, EulerMaruyamaMatchesInverseGaussianMean) {
    Rng rng(17);
    const double d = 50.0, u = 0.5, D = 0.2;
    const int n = 4000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += oracle::sample_euler_maruyama(rng, d, u, D, 0.05);
    const double var = 2.0 * D * d / (u * u * u);
    EXPECT_NEAR(s / n, d / u, 4.0 * std::sqrt(var / n) + 0.05);
}

TEST(Particles, ChainHistogramMatchesCir) {
    const auto s = fixtures::scenario(fixtures::kChain);
    oracle::ParticleConfig cfg;
    cfg.count = 200000;
    const auto r = oracle::simulate_particles(s.flow, s.topology.transmitters[0], s.rx(), cfg);
    EXPECT_EQ(r.lost, 0u);
    const auto& h = s.cirs[0];
    const double mu = h.components[0].mean, sd = std::sqrt(h.components[0].variance);
    EXPECT_LT(l1_distance(r, h, std::max(0.0, mu - 8 * sd), mu + 12 * sd, 100), 0.05);
}

TEST(Particles, DiamondBranchFractionsMatchWeights) {
    const auto s = fixtures::scenario(fixtures::kDiamond);
    oracle::ParticleConfig cfg;
    cfg.count = 200000;
    const auto r = oracle::simulate_particles(s.flow, s.topology.transmitters[0], s.rx(), cfg);
    const auto& h = s.cirs[0];
    const auto paths = net::enumerate_paths(s.flow, "in", "out");
    for (const auto& p : paths) {
        const double n = static_cast<double>(r.launched());
        const double got = r.routes.count(p.pipes) ? static_cast<double>(r.routes.at(p.pipes)) / n : 0.0;
        EXPECT_NEAR(got, p.weight, 3.0 * std::sqrt(p.weight * (1 - p.weight) / n));
    }
    const double lo = 0.0, hi = h.horizon(0.9999);
    EXPECT_LT(l1_distance(r, h, lo, hi, 120), 0.05);
}

TEST(Particles, OutputIndependentOfWorkerCount) {
    const auto s = fixtures::scenario(fixtures::kDiamond);
    oracle::ParticleConfig cfg;
    cfg.count = 20000;
    cfg.workers = 1;
    const auto a = oracle::simulate_particles(s.flow, s.topology.transmitters[0], s.rx(), cfg);
    cfg.workers = 4;
    const auto b = oracle::simulate_particles(s.flow, s.topology.transmitters[0], s.rx(), cfg);
    EXPECT_EQ(a.arrivals, b.arrivals);
    EXPECT_EQ(a.routes, b.routes);
}

TEST(Particles, LostWhenReceiverIsOffPath) {
    const auto s = fixtures::scenario(fixtures::kTree);
    oracle::ParticleConfig cfg;
    cfg.count = 1000;
    const channel::ReceiverSpec rx{2, 200, 1};
    const auto r = oracle::simulate_particles(s.flow, s.topology.transmitters[0], rx, cfg);
    EXPECT_TRUE(r.arrivals.empty());
    EXPECT_EQ(r.lost, 1000u);
}

TEST(Particles, EulerMaruyamaAgreesWithChainCir) {
    const auto s = fixtures::scenario(fixtures::kChain);
    oracle::ParticleConfig cfg;
    cfg.count = 4000;
    cfg.sampler = oracle::Sampler::EulerMaruyama;
    cfg.dt = 0.05;
    const auto r = oracle::simulate_particles(s.flow, s.topology.transmitters[0], s.rx(), cfg);
    const double mean = std::accumulate(r.arrivals.begin(), r.arrivals.end(), 0.0) / r.arrivals.size();
    const auto& c = s.cirs[0].components[0];
    EXPECT_NEAR(mean, c.mean, 4.0 * std::sqrt(c.variance / r.arrivals.size()) + cfg.dt);
}

TEST(Histogram, BinsAndBounds) {
    const auto h = oracle::histogram({0.0, 0.5, 0.99, 1.0, -1.0, 2.0}, 0.0, 1.0, 2);
    EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 2}));
    EXPECT_THROW(oracle::histogram({}, 1.0, 1.0, 3), ValidationError);
}
