#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"

using namespace mightloc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("mightloc_" + name);
    fs::remove_all(p);
    return p;
}

// Largest deviation from the best non-decreasing fit (pool adjacent violators).
double isotonic_residual(const std::vector<double>& v) {
    std::vector<double> level;
    std::vector<std::size_t> count;
    for (double x : v) {
        level.push_back(x);
        count.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const std::size_t n = count.back() + count[count.size() - 2];
            const double m = (level.back() * count.back() + level[level.size() - 2] * count[count.size() - 2]) / n;
            level.pop_back();
            count.pop_back();
            level.back() = m;
            count.back() = n;
        }
    }
    double worst = 0.0;
    std::size_t i = 0;
    for (std::size_t b = 0; b < level.size(); ++b)
        for (std::size_t k = 0; k < count[b]; ++k, ++i) worst = std::max(worst, std::abs(v[i] - level[b]));
    return worst;
}

struct TreeSetup {
    exp::Scenario s = fixtures::scenario(fixtures::kTree);
    exp::Receiver r = exp::make_receiver(s, 2.0);
};

const TreeSetup& tree() {
    static const TreeSetup t;
    return t;
}

}  // namespace

TEST(Release, ZeroVarianceIsDeterministic) {
    const auto m = channel::ReleaseModel::log_normal(18.69, 0.0);
    EXPECT_NEAR(exp::draw_release_count(m, 1), 130907300.38, 0.01);
    EXPECT_EQ(exp::draw_release_count(m, 1), exp::draw_release_count(m, 99));
}

TEST(Release, LogCountHasTheConfiguredMean) {
    const auto m = channel::ReleaseModel::log_normal(18.69, 2.46);
    Rng rng = make_rng(2024, 0);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = exp::draw_release_count(m, rng);
        ASSERT_GT(x, 0.0);
        sum += std::log(x);
    }
    EXPECT_NEAR(sum / n, 18.69, 3.0 * std::sqrt(2.46 / n));
}

TEST(Release, SeededAndPointMass) {
    const auto m = channel::ReleaseModel::log_normal(18.69, 2.46);
    EXPECT_EQ(exp::draw_release_count(m, 5), exp::draw_release_count(m, 5));
    EXPECT_NE(exp::draw_release_count(m, 5), exp::draw_release_count(m, 6));
    EXPECT_EQ(exp::draw_release_count(channel::ReleaseModel::point_mass(42.0), 5), 42.0);
}

TEST(Snr, ConstantAmplitude) {
    exp::SignalPower p;
    p.power = {9.0};
    p.mean = 9.0;
    EXPECT_NEAR(exp::mean_snr_db(p, 1.0), 10.0 * std::log10(9.0), 1e-12);
    EXPECT_NEAR(exp::mean_snr_db(p, 2.0), exp::mean_snr_db(p, 1.0) - 3.0103, 1e-4);
    EXPECT_NEAR(exp::mean_snr_db(p, exp::noise_for_snr(p, 17.5)), 17.5, 1e-12);
}

TEST(Snr, AverageIsOverLinearPowers) {
    exp::SignalPower p;
    p.power = {1.0, 100.0};
    p.mean = 50.5;
    EXPECT_NEAR(exp::mean_snr_db(p, 1.0), 10.0 * std::log10(50.5), 1e-12);
}

TEST(Snr, ChainSignalPowerMatchesDirectIntegration) {
    const auto s = fixtures::scenario(fixtures::kChain);
    const auto p = exp::signal_power(s);
    ASSERT_EQ(p.power.size(), 1u);

    const double r = 0.055, D = 0.2, Q = 5e-3;
    const double u = Q / (std::numbers::pi * r * r);
    const double Dbar = r * r * u * u / (48.0 * D) + D;
    const double dist = 60.0 + 45.0;
    const double mu = dist / u, var = 2.0 * Dbar * dist / (u * u * u);
    const double lambda = mu * mu * mu / var;
    const double scale = std::exp(18.69 + 0.5 * 2.46) * 1.0 / u;
    const double dt = 1e-3;
    std::vector<double> e2;
    for (double t = dt; t < mu + 40.0 * std::sqrt(var); t += dt) {
        const double h = std::sqrt(lambda / (2.0 * std::numbers::pi * t * t * t)) *
                         std::exp(-lambda * (t - mu) * (t - mu) / (2.0 * mu * mu * t));
        e2.push_back(scale * scale * h * h);
    }
    double total = 0.0;
    for (double v : e2) total += v;
    double acc = 0.0;
    std::size_t lo = 0, hi = 0;
    for (std::size_t k = 0; k < e2.size(); ++k) {
        if (acc < 0.005 * total) lo = k;
        acc += e2[k];
        if (acc < 0.995 * total) hi = k + 1;
    }
    double band = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) band += e2[k];
    const double expected = band / static_cast<double>(hi - lo + 1);
    EXPECT_NEAR(p.power[0], expected, 0.01 * expected);
    EXPECT_NEAR(p.t2[0] - p.t1[0], (hi - lo) * dt, 0.02 * (hi - lo) * dt);
}

TEST(Crossing, InterpolatesBetweenGridPoints) {
    const std::vector<double> snr{0, 10, 20};
    EXPECT_DOUBLE_EQ(*exp::crossing(snr, {0.1, 0.3, 0.7}, 0.5), 15.0);
    EXPECT_DOUBLE_EQ(*exp::crossing(snr, {0.9, 0.6, 0.2}, 0.5, false), 12.5);
    EXPECT_DOUBLE_EQ(*exp::crossing(snr, {0.6, 0.7, 0.8}, 0.5), 0.0);
    EXPECT_FALSE(exp::crossing(snr, {0.1, 0.2, 0.3}, 0.5).has_value());
}

TEST(Spearman, RanksWithTies) {
    EXPECT_DOUBLE_EQ(exp::spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
    EXPECT_DOUBLE_EQ(exp::spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
    EXPECT_NEAR(exp::spearman({1, 2, 2, 3}, {1, 3, 2, 4}), 4.5 / std::sqrt(22.5), 1e-12);
    EXPECT_EQ(exp::spearman({1, 1, 1}, {1, 2, 3}), 0.0);
}

TEST(Distance, AlongPipesToReceiverCenter) {
    const auto& s = tree().s;
    EXPECT_DOUBLE_EQ(exp::tx_rx_distance(s.flow, s.topology.transmitters[0], s.rx()), 50.0 + 120.0 + 100.0);
    EXPECT_DOUBLE_EQ(exp::tx_rx_distance(s.flow, s.topology.transmitters[1], s.rx()), 400.0 + 120.0 + 100.0);
    EXPECT_DOUBLE_EQ(exp::tx_rx_distance(s.flow, s.topology.transmitters[2], s.rx()), 1500.0 + 100.0);
}

TEST(Scenario, RejectsMissingReceiver) {
    std::string text = fixtures::kChain;
    text = text.substr(0, text.find("[receiver]"));
    EXPECT_THROW(fixtures::scenario(text.c_str()), ValidationError);
}

TEST(ConfusionMatrix, IdentityAtLowNoise) {
    const auto& s = tree().s;
    const auto cm = exp::build_confusion_matrix(s, tree().r, 10, 1e-6, 3);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(cm.missed[i], 0.0);
        for (std::size_t j = 0; j < s.size(); ++j) EXPECT_DOUBLE_EQ(cm.cm[i][j], i == j ? 1.0 : 0.0);
    }
}

TEST(ConfusionMatrix, RowsAndDeterminism) {
    const auto& s = tree().s;
    const double noise = exp::noise_for_snr(exp::signal_power(s), -15.0);
    const auto a = exp::build_confusion_matrix(s, tree().r, 40, noise, 11, 1);
    const auto b = exp::build_confusion_matrix(s, tree().r, 40, noise, 11, 3);
    EXPECT_EQ(a.cm, b.cm);
    EXPECT_EQ(a.missed, b.missed);
    double missed = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double row = a.missed[i];
        for (double v : a.cm[i]) {
            EXPECT_GE(v, 0.0);
            row += v;
        }
        EXPECT_NEAR(row, 1.0, 1e-12);
        missed += a.missed[i];
    }
    EXPECT_GT(missed, 0.0);  // the noise level is low enough to matter
    EXPECT_THROW(exp::build_confusion_matrix(s, tree().r, 0, noise, 11), ValidationError);
}

TEST(Sweep, RatesAreConsistentAndMonotone) {
    const auto& s = tree().s;
    exp::SweepConfig cfg;
    cfg.snr_db = {-30, -20, -10, 0, 10, 20};
    cfg.fs = {2.0};
    cfg.trials = 150;
    cfg.seed = 8;
    const cluster::Partition singletons{{0, 1, 2}};
    const cluster::Partition one{{0, 0, 0}};
    const auto rows = exp::run_sweep(s, cfg, singletons, one, {&tree().r});
    ASSERT_EQ(rows.size(), cfg.snr_db.size());
    std::vector<double> acc, miss_neg;
    for (const auto& r : rows) {
        EXPECT_EQ(r.trials, cfg.trials);
        EXPECT_EQ(r.cluster_csm, r.exact);  // singleton clusters
        EXPECT_EQ(r.cluster_kmeans + r.missed, r.trials);
        EXPECT_GE(r.cluster_csm, r.exact);
        acc.push_back(r.exact_accuracy());
        miss_neg.push_back(-r.missed_rate());
    }
    const double tol = 2.0 / std::sqrt(static_cast<double>(cfg.trials));
    EXPECT_LE(isotonic_residual(acc), tol);
    EXPECT_LE(isotonic_residual(miss_neg), tol);
    EXPECT_GT(rows.front().missed_rate(), 0.5);
    EXPECT_EQ(rows.back().exact_accuracy(), 1.0);
}

TEST(Sweep, DeterministicAndIndependentOfPrebuiltReceiver) {
    const auto& s = tree().s;
    exp::SweepConfig cfg;
    cfg.snr_db = {-10, 0};
    cfg.fs = {2.0};
    cfg.trials = 30;
    cfg.sampling = exp::TxSampling::Blocks;
    const cluster::Partition p{{0, 1, 1}};
    const auto a = exp::run_sweep(s, cfg, p, p, {&tree().r});
    cfg.workers = 1;
    const auto b = exp::run_sweep(s, cfg, p, p);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].exact, b[i].exact);
        EXPECT_EQ(a[i].missed, b[i].missed);
        EXPECT_EQ(a[i].cluster_csm, b[i].cluster_csm);
        EXPECT_GE(a[i].cluster_csm, a[i].exact);
    }
}

TEST(Study, WritesTheBundleReproducibly) {
    const auto& s = tree().s;
    exp::StudyConfig cfg;
    cfg.noise_variance = exp::noise_for_snr(exp::signal_power(s), 10.0);
    cfg.cm_trials = 5;
    cfg.sweep.snr_db = {0, 20};
    cfg.sweep.fs = {2.0};
    cfg.sweep.trials = 12;
    const auto dir_a = scratch("study_a"), dir_b = scratch("study_b");
    const auto res = exp::run_study(s, cfg, dir_a);
    exp::run_study(s, cfg, dir_b);
    for (const char* f : {"cir_bank.csv", "matched_filters.csv", "cm.csv", "cm_binary.csv", "csm.csv",
                          "csm_binary.csv", "partition.csv", "aligned_cirs.csv", "sweep.csv",
                          "tx_distance_arrival.csv", "metrics.csv", "manifest.txt"}) {
        ASSERT_TRUE(fs::exists(dir_a / f)) << f;
        EXPECT_EQ(slurp(dir_a / f), slurp(dir_b / f)) << f;
    }
    EXPECT_DOUBLE_EQ(res.ari_cm_cm, 1.0);
    EXPECT_NEAR(res.default_snr_db, 10.0, 1e-9);
    EXPECT_EQ(res.sweep.size(), 2u);
    const auto manifest = slurp(dir_a / "manifest.txt");
    EXPECT_NE(manifest.find("version = "), std::string::npos);
    EXPECT_EQ(manifest.find("seed = "), manifest.rfind("seed = "));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}
