#pragma once

// Scenario setup, Monte Carlo localization trials, SNR sweeps and the
// sewage-network study bundle.

#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "clustering.hpp"
#include "io.hpp"
#include "mfloc.hpp"
#include "topology.hpp"

namespace mightloc::exp {

struct Scenario {
    Topology topology;
    net::FlowField flow;
    std::vector<channel::ChannelResponse> cirs;  // one per transmitter, ascending id
    channel::ObservationModel model = channel::ObservationModel::Uniform;

    std::size_t size() const { return cirs.size(); }
    const channel::ReceiverSpec& rx() const { return *topology.receiver; }
    std::vector<int> tx_ids() const {
        std::vector<int> ids;
        for (const auto& c : cirs) ids.push_back(c.tx);
        return ids;
    }
};

inline Scenario make_scenario(Topology topo,
                              channel::ObservationModel model = channel::ObservationModel::Uniform) {
    if (!topo.receiver) throw ValidationError("scenario needs a [receiver] section");
    if (topo.transmitters.empty()) throw ValidationError("scenario needs at least one transmitter");
    Scenario s;
    s.flow = net::solve_flow(topo.network, topo.diffusion, topo.viscosity);
    s.model = model;
    for (const auto& tx : topo.transmitters) {
        s.cirs.push_back(channel::channel_response(s.flow, tx, *topo.receiver));
        if (!s.cirs.back().reachable())
            throw ValidationError("transmitter " + std::to_string(tx.id) + " cannot reach the receiver");
    }
    s.topology = std::move(topo);
    return s;
}

inline Scenario load_scenario(const std::string& path,
                              channel::ObservationModel model = channel::ObservationModel::Uniform) {
    return make_scenario(load_topology_file(path), model);
}

inline double draw_release_count(const channel::ReleaseModel& model, Rng& rng) {
    if (model.kind == channel::ReleaseModel::Kind::PointMass) return model.count;
    if (model.log_variance == 0.0) return std::exp(model.log_mean);
    std::normal_distribution<double> ln(model.log_mean, std::sqrt(model.log_variance));
    return std::exp(ln(rng));
}

inline double draw_release_count(const channel::ReleaseModel& model, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0);
    return draw_release_count(model, rng);
}

// ---------------------------------------------------------------------------
// SNR

struct SignalPower {
    std::vector<double> power;  // per Tx, molecules^2
    std::vector<double> t1, t2;  // central 99% energy interval, s
    double mean = 0.0;
};

/// Average power of the expected signal (mean release count) over the central
/// 99%-energy interval of each transmitter, on a fine time grid.
inline SignalPower signal_power(const Scenario& s, double energy_fraction = 0.99) {
    const auto grid = cluster::sample_on_grid(s.cirs);
    const double u = s.flow.velocity_of(s.rx().pipe);
    const double scale = s.topology.release.mean() * s.rx().length / u;
    SignalPower p;
    const double tail = 0.5 * (1.0 - energy_fraction);
    for (std::size_t g = 0; g < s.size(); ++g) {
        std::vector<double> sig(grid.h[g].size());
        if (s.model == channel::ObservationModel::Exact)
            for (std::size_t k = 0; k < sig.size(); ++k)
                sig[k] = channel::expected_observation_exact(s.cirs[g], s.flow, s.topology.release.mean(),
                                                             static_cast<double>(k) * grid.dt);
        else
            for (std::size_t k = 0; k < sig.size(); ++k) sig[k] = scale * grid.h[g][k];
        std::vector<double> cum(sig.size() + 1, 0.0);
        for (std::size_t k = 0; k < sig.size(); ++k) cum[k + 1] = cum[k] + sig[k] * sig[k];
        const double total = cum.back();
        if (!(total > 0.0)) throw SignalError("zero-energy expected signal");
        // cum[k] is the energy up to (k - 1/2) dt; interval edges interpolate linearly
        auto edge = [&](double level) {
            const auto k = static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), level) - cum.begin());
            if (k == 0) return 0.0;
            const double f = (level - cum[k - 1]) / (cum[k] - cum[k - 1]);
            return std::max(0.0, (static_cast<double>(k) - 1.5 + f) * grid.dt);
        };
        const double t1 = edge(tail * total), t2 = edge((1.0 - tail) * total);
        if (!(t2 > t1)) throw SignalError("degenerate signal interval");
        p.t1.push_back(t1);
        p.t2.push_back(t2);
        p.power.push_back(energy_fraction * total * grid.dt / (t2 - t1));
    }
    p.mean = std::accumulate(p.power.begin(), p.power.end(), 0.0) / static_cast<double>(p.power.size());
    return p;
}

inline double mean_snr_db(const SignalPower& p, double noise_variance) {
    return 10.0 * std::log10(p.mean / noise_variance);
}

inline double mean_snr_db(const Scenario& s, double noise_variance) {
    return mean_snr_db(signal_power(s), noise_variance);
}

inline double noise_for_snr(const SignalPower& p, double snr_db) { return p.mean / std::pow(10.0, snr_db / 10.0); }

// ---------------------------------------------------------------------------
// Trials

/// Everything that depends on the sampling rate: LP filter, MF bank and the
/// noiseless one-molecule samples per transmitter.
struct Receiver {
    double fs = 0.0;
    sensing::LowPassFilter lowpass;
    mf::MatchedFilterBank bank;
    std::size_t length = 0;                  // raw samples per trial
    std::vector<std::vector<double>> unit;   // [g][k]
};

/// The bank does not depend on the noise level (R_nn scales with it and the
/// filter normalization cancels the scale), so one bank serves all SNRs.
inline Receiver make_receiver(const Scenario& s, double fs, double bank_noise_variance = 1e3, unsigned workers = 0) {
    Receiver r;
    r.fs = fs;
    sensing::SensorConfig cfg;
    cfg.fs = fs;
    cfg.noise_variance = bank_noise_variance;
    r.lowpass = sensing::design_lowpass(s.cirs, fs);
    r.bank = mf::build_bank(s.cirs, s.flow, r.lowpass, cfg, s.model, workers);
    r.length = std::max(r.bank.raw_length, 2 * r.bank.M);
    for (const auto& c : s.cirs) r.unit.push_back(mf::unit_observation(c, s.flow, cfg.Ts(), r.length, s.model));
    return r;
}

struct TrialOutcome {
    std::size_t truth = 0;  // bank index
    double release = 0.0;
    mf::LocalizationResult result;

    bool exact() const { return result.identified() && result.candidate == truth; }
};

/// One noisy release from transmitter g.
inline TrialOutcome run_trial(const Scenario& s, const Receiver& r, std::size_t g, double noise_variance, Rng& rng,
                              double threshold = mf::kDefaultThreshold) {
    TrialOutcome out;
    out.truth = g;
    out.release = draw_release_count(s.topology.release, rng);
    const auto raw = sensing::noisy_samples(r.unit[g], out.release, noise_variance, rng);
    out.result = mf::localize(raw, r.bank, threshold);
    return out;
}

struct ConfusionMatrix {
    cluster::Matrix cm;               // cm[i][j]: fraction of Tx i trials classified as Tx j
    std::vector<double> missed;       // per true Tx
    std::size_t n_sim = 0;
};

/// n_sim trials per transmitter; trial t of Tx i draws from stream (seed, i, t).
inline ConfusionMatrix build_confusion_matrix(const Scenario& s, const Receiver& r, std::size_t n_sim,
                                              double noise_variance, std::uint64_t seed, unsigned workers = 0) {
    if (n_sim < 1) throw ValidationError("N_sim must be >= 1");
    const std::size_t U = s.size();
    std::vector<std::size_t> est(U * n_sim);
    parallel_for(U * n_sim, [&](std::size_t job) {
        const std::size_t i = job / n_sim, t = job % n_sim;
        Rng rng = make_rng(stream_seed(seed, i), t);
        const auto o = run_trial(s, r, i, noise_variance, rng);
        est[job] = o.result.identified() ? o.result.candidate : U;
    }, workers);
    ConfusionMatrix c;
    c.n_sim = n_sim;
    c.cm = cluster::square(U);
    c.missed.assign(U, 0.0);
    const double w = 1.0 / static_cast<double>(n_sim);
    for (std::size_t job = 0; job < est.size(); ++job) {
        const std::size_t i = job / n_sim;
        if (est[job] == U)
            c.missed[i] += w;
        else
            c.cm[i][est[job]] += w;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class TxSampling { Uniform, Blocks };

struct SweepConfig {
    std::vector<double> snr_db = {-20, -15, -10, -5, 0, 5, 10, 15, 20, 25, 30, 35, 40};
    std::vector<double> fs = {2.0, 0.2};
    std::size_t trials = 200;
    std::uint64_t seed = 1;
    TxSampling sampling = TxSampling::Uniform;
    unsigned workers = 0;
};

struct SweepRow {
    double fs = 0.0;
    double snr_db = 0.0;
    double noise_variance = 0.0;
    std::size_t trials = 0;
    std::size_t exact = 0;
    std::size_t cluster_csm = 0;
    std::size_t cluster_kmeans = 0;
    std::size_t missed = 0;

    double rate(std::size_t n) const { return static_cast<double>(n) / static_cast<double>(trials); }
    double exact_accuracy() const { return rate(exact); }
    double csm_accuracy() const { return rate(cluster_csm); }
    double kmeans_accuracy() const { return rate(cluster_kmeans); }
    double missed_rate() const { return rate(missed); }
};

/// Rows ordered by fs grid, then SNR grid. Trial t at grid point (f, s) uses
/// stream (seed, f * |snr grid| + s, t).
inline std::vector<SweepRow> run_sweep(const Scenario& s, const SweepConfig& cfg, const cluster::Partition& csm,
                                       const cluster::Partition& kmeans,
                                       const std::vector<const Receiver*>& prebuilt = {}) {
    if (cfg.trials < 1) throw ValidationError("trials must be >= 1");
    const auto power = signal_power(s);
    const std::size_t U = s.size();
    std::vector<SweepRow> rows;
    for (std::size_t fi = 0; fi < cfg.fs.size(); ++fi) {
        std::optional<Receiver> own;
        const Receiver* rec = nullptr;
        for (const auto* p : prebuilt)
            if (p && p->fs == cfg.fs[fi]) rec = p;
        if (!rec) {
            own = make_receiver(s, cfg.fs[fi], 1e3, cfg.workers);
            rec = &*own;
        }
        for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
            SweepRow row;
            row.fs = cfg.fs[fi];
            row.snr_db = cfg.snr_db[si];
            row.noise_variance = noise_for_snr(power, row.snr_db);
            row.trials = cfg.trials;
            const std::uint64_t point_seed = stream_seed(cfg.seed, fi * cfg.snr_db.size() + si);
            std::vector<TrialOutcome> outcomes(cfg.trials);
            parallel_for(cfg.trials, [&](std::size_t t) {
                Rng rng = make_rng(point_seed, t);
                std::size_t g = t % U;
                if (cfg.sampling == TxSampling::Uniform) g = std::uniform_int_distribution<std::size_t>(0, U - 1)(rng);
                outcomes[t] = run_trial(s, *rec, g, row.noise_variance, rng);
            }, cfg.workers);
            for (const auto& o : outcomes) {
                if (!o.result.identified()) {
                    ++row.missed;
                    continue;
                }
                if (o.exact()) ++row.exact;
                if (csm.same_cluster(o.truth, o.result.candidate)) ++row.cluster_csm;
                if (kmeans.same_cluster(o.truth, o.result.candidate)) ++row.cluster_kmeans;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_sweep(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    io::CsvWriter csv(path, {"fs_hz", "snr_db", "noise_variance", "trials", "exact_accuracy", "csm_cluster_accuracy",
                             "kmeans_cluster_accuracy", "missed_detection"});
    for (const auto& r : rows)
        csv.row(r.fs, r.snr_db, r.noise_variance, r.trials, r.exact_accuracy(), r.csm_accuracy(),
                r.kmeans_accuracy(), r.missed_rate());
}

/// SNR (linear interpolation between grid points) at which `values` first
/// reaches `level`; rising selects upward crossings. nullopt if never.
inline std::optional<double> crossing(const std::vector<double>& snr, const std::vector<double>& values, double level,
                                      bool rising = true) {
    for (std::size_t i = 0; i < snr.size(); ++i) {
        const bool hit = rising ? values[i] >= level : values[i] <= level;
        if (!hit) continue;
        if (i == 0) return snr[0];
        const double a = values[i - 1], b = values[i];
        if (a == b) return snr[i];
        return snr[i - 1] + (level - a) / (b - a) * (snr[i] - snr[i - 1]);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Study

/// Shortest along-pipe distance from the transmitter to the receiver center.
inline double tx_rx_distance(const net::FlowField& flow, const channel::TransmitterSpec& tx,
                             const channel::ReceiverSpec& rx) {
    const auto& net = flow.network;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : net::enumerate_paths(flow, net.pipe(tx.pipe).source, net.pipe(rx.pipe).destination)) {
        if (!p.contains(tx.pipe) || !p.contains(rx.pipe)) continue;
        double d = 0.0;
        for (int id : p.pipes) {
            if (id == tx.pipe)
                d += net.pipe(id).length - tx.z;
            else if (id == rx.pipe)
                d += rx.z;
            else
                d += net.pipe(id).length;
        }
        best = std::min(best, d);
    }
    return best;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

struct Clusterings {
    cluster::Matrix csm, csm_binary;
    cluster::Partition csm_partition, kmeans_partition;
    cluster::Matrix distances;
    cluster::CirGrid grid;
};

inline Clusterings analytic_clusterings(const Scenario& s, std::uint64_t seed) {
    Clusterings c;
    c.grid = cluster::sample_on_grid(s.cirs);
    c.csm = cluster::build_csm(c.grid);
    c.csm_binary = cluster::binarize_csm(c.csm);
    c.csm_partition = cluster::louvain(c.csm_binary, false, seed);
    c.kmeans_partition = cluster::kmeans_baseline(s.cirs, c.csm_partition.cluster_count(), seed).partition;
    c.distances = cluster::cir_distances(c.grid);
    return c;
}

struct StudyConfig {
    double fs = 2.0;
    double noise_variance = 1e3;
    std::size_t cm_trials = 100;
    SweepConfig sweep;
    std::uint64_t seed = 1;
};

struct StudyResult {
    ConfusionMatrix cm;
    cluster::Matrix cm_binary;
    cluster::Partition cm_partition;
    Clusterings analytic;
    std::vector<SweepRow> sweep;
    double silhouette_cm = 0.0, silhouette_csm = 0.0, silhouette_kmeans = 0.0;
    double ari_cm_cm = 0.0, ari_cm_csm = 0.0, ari_cm_kmeans = 0.0, ari_csm_kmeans = 0.0;
    double spearman_distance_arrival = 0.0;
    double default_snr_db = 0.0;
};

/// Runs the full study and writes its data files into `out`.
inline StudyResult run_study(const Scenario& s, const StudyConfig& cfg, const std::filesystem::path& out,
                                   io::Manifest manifest = {}) {
    std::filesystem::create_directories(out);
    StudyResult res;
    const auto ids = s.tx_ids();
    const std::size_t U = s.size();

    const Receiver rec = make_receiver(s, cfg.fs, cfg.noise_variance, cfg.sweep.workers);
    res.default_snr_db = mean_snr_db(s, cfg.noise_variance);

    res.cm = build_confusion_matrix(s, rec, cfg.cm_trials, cfg.noise_variance, stream_seed(cfg.seed, 1),
                                    cfg.sweep.workers);
    res.cm_binary = cluster::binarize_cm(res.cm.cm);
    res.cm_partition = cluster::louvain(res.cm_binary, true, cfg.seed);
    res.analytic = analytic_clusterings(s, cfg.seed);
    const auto& a = res.analytic;

    res.silhouette_cm = cluster::silhouette(res.cm_partition, a.distances);
    res.silhouette_csm = cluster::silhouette(a.csm_partition, a.distances);
    res.silhouette_kmeans = cluster::silhouette(a.kmeans_partition, a.distances);
    res.ari_cm_cm = cluster::adjusted_rand_index(res.cm_partition, res.cm_partition);
    res.ari_cm_csm = cluster::adjusted_rand_index(res.cm_partition, a.csm_partition);
    res.ari_cm_kmeans = cluster::adjusted_rand_index(res.cm_partition, a.kmeans_partition);
    res.ari_csm_kmeans = cluster::adjusted_rand_index(a.csm_partition, a.kmeans_partition);

    SweepConfig sweep = cfg.sweep;
    sweep.seed = stream_seed(cfg.seed, 2);
    res.sweep = run_sweep(s, sweep, a.csm_partition, a.kmeans_partition, {&rec});

    // CIR bank at the sampling period of the default receiver
    {
        const double Ts = 1.0 / cfg.fs;
        const auto n = static_cast<std::size_t>(std::ceil(a.grid.h[0].size() * a.grid.dt / Ts));
        std::vector<std::string> header{"t_s"};
        for (int id : ids) header.push_back("tx" + std::to_string(id));
        io::CsvWriter csv(out / "cir_bank.csv", header);
        std::vector<std::vector<double>> cols;
        for (const auto& c : s.cirs) cols.push_back(c.sample(Ts, n));
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<std::string> cells{io::fmt(static_cast<double>(k) * Ts)};
            for (const auto& col : cols) cells.push_back(io::fmt(col[k]));
            csv.row_vec(cells);
        }
    }
    {
        std::vector<std::string> header{"k"};
        for (int id : ids) header.push_back("v" + std::to_string(id));
        io::CsvWriter csv(out / "matched_filters.csv", header);
        for (std::size_t k = 0; k < rec.bank.M; ++k) {
            std::vector<std::string> cells{io::fmt(k)};
            for (const auto& v : rec.bank.filters) cells.push_back(io::fmt(v[k]));
            csv.row_vec(cells);
        }
    }
    io::write_matrix(out / "cm.csv", ids, res.cm.cm);
    io::write_matrix(out / "cm_binary.csv", ids, res.cm_binary);
    io::write_matrix(out / "csm.csv", ids, a.csm);
    io::write_matrix(out / "csm_binary.csv", ids, a.csm_binary);
    {
        io::CsvWriter csv(out / "partition.csv", {"tx", "cm_cluster", "csm_cluster", "kmeans_cluster", "missed_rate"});
        for (std::size_t g = 0; g < U; ++g)
            csv.row(ids[g], res.cm_partition.labels[g], a.csm_partition.labels[g], a.kmeans_partition.labels[g],
                    res.cm.missed[g]);
    }
    {
        // Max-normalized CIRs shifted onto the first member of their CSM cluster.
        io::CsvWriter csv(out / "aligned_cirs.csv", {"csm_cluster", "tx", "t_s", "h_normalized"});
        const std::size_t n = a.grid.h[0].size();
        const std::size_t stride = std::max<std::size_t>(1, n / 2000);
        std::vector<std::size_t> ref(static_cast<std::size_t>(a.csm_partition.cluster_count()), U);
        for (std::size_t g = 0; g < U; ++g) {
            auto& r = ref[static_cast<std::size_t>(a.csm_partition.labels[g])];
            if (r == U) r = g;
        }
        for (int c = 0; c < a.csm_partition.cluster_count(); ++c)
            for (std::size_t g = 0; g < U; ++g) {
                if (a.csm_partition.labels[g] != c) continue;
                const auto h = cluster::max_normalized(a.grid.h[g]);
                const std::ptrdiff_t lag =
                    g == ref[static_cast<std::size_t>(c)] ? 0 : cluster::best_lag(a.grid.h[ref[static_cast<std::size_t>(c)]], a.grid.h[g]);
                // sample k of the shifted curve is h[k + lag]
                for (std::size_t k = 0; k < n; k += stride) {
                    const auto src = static_cast<std::ptrdiff_t>(k) + lag;
                    const double v = src >= 0 && src < static_cast<std::ptrdiff_t>(n) ? h[static_cast<std::size_t>(src)] : 0.0;
                    csv.row(c, ids[g], static_cast<double>(k) * a.grid.dt, v);
                }
            }
    }
    write_sweep(out / "sweep.csv", res.sweep);
    {
        std::vector<double> dist, arrival;
        io::CsvWriter csv(out / "tx_distance_arrival.csv", {"tx", "distance_m", "mean_arrival_s"});
        for (std::size_t g = 0; g < U; ++g) {
            dist.push_back(tx_rx_distance(s.flow, s.topology.transmitters[g], s.rx()));
            arrival.push_back(s.cirs[g].mean_arrival());
            csv.row(ids[g], dist.back(), arrival.back());
        }
        res.spearman_distance_arrival = spearman(dist, arrival);
    }
    {
        io::CsvWriter csv(out / "metrics.csv", {"metric", "value"});
        csv.row("silhouette_cm_binary", res.silhouette_cm);
        csv.row("silhouette_csm_binary", res.silhouette_csm);
        csv.row("silhouette_kmeans", res.silhouette_kmeans);
        csv.row("ari_cm_cm", res.ari_cm_cm);
        csv.row("ari_cm_csm", res.ari_cm_csm);
        csv.row("ari_cm_kmeans", res.ari_cm_kmeans);
        csv.row("ari_csm_kmeans", res.ari_csm_kmeans);
        csv.row("clusters_cm_binary", res.cm_partition.cluster_count());
        csv.row("clusters_csm_binary", a.csm_partition.cluster_count());
        csv.row("spearman_distance_arrival", res.spearman_distance_arrival);
        csv.row("mean_snr_db_default", res.default_snr_db);
        csv.row("lowpass_cutoff_hz", rec.lowpass.cutoff);
        csv.row("lowpass_taps", rec.lowpass.taps.size());
        csv.row("filter_length_M", rec.bank.M);
    }
    manifest.set("fs_hz", cfg.fs);
    manifest.set("noise_variance", cfg.noise_variance);
    manifest.set("cm_trials", io::fmt(cfg.cm_trials));
    manifest.set("sweep_trials", io::fmt(cfg.sweep.trials));
    manifest.set("seed", io::fmt(static_cast<std::size_t>(cfg.seed)));
    manifest.write(out / "manifest.txt");
    return res;
}

}  // namespace mightloc::exp
