// mightloc: command-line front end for the localization library.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <mightloc/experiments.hpp>
#include <mightloc/particle_oracle.hpp>

namespace fs = std::filesystem;
using namespace mightloc;

namespace {

struct Options {
    std::string network;
    std::uint64_t seed = 1;
    double fs = 2.0;
    double noise_var = 1e3;
    std::optional<std::size_t> trials;
    std::string snr_grid;
    std::string fs_grid = "2,0.2";
    std::string out = "out";
    unsigned workers = 0;
    bool exact_model = false;

    // subcommand specific
    std::size_t particles = 100000;
    std::string sampler = "ig";
    std::size_t bins = 200;
    std::string signal;
    int tx = 0;
    double threshold = mf::kDefaultThreshold;
    bool zero_lag = false;
    std::string sampling = "uniform";
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("cannot parse list entry '" + item + "'");
        }
    }
    if (out.empty()) throw ValidationError("empty list '" + text + "'");
    return out;
}

channel::ObservationModel model_of(const Options& o) {
    return o.exact_model ? channel::ObservationModel::Exact : channel::ObservationModel::Uniform;
}

exp::Scenario scenario_of(const Options& o) {
    if (o.network.empty()) throw ValidationError("--network is required");
    return exp::load_scenario(o.network, model_of(o));
}

std::size_t trials_or(const Options& o, std::size_t fallback) {
    if (o.trials && *o.trials == 0) throw ValidationError("--trials must be positive");
    return o.trials.value_or(fallback);
}

io::Manifest manifest_for(const std::string& command, const Options& o) {
    io::Manifest m;
    m.set("command", command);
    m.set("network", o.network);
    m.set("seed", io::fmt(static_cast<std::size_t>(o.seed)));
    m.set("observation_model", o.exact_model ? "exact" : "uniform");
    return m;
}

fs::path out_dir(const Options& o) {
    fs::path p(o.out);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> tx_header(const std::string& first, const std::vector<int>& ids) {
    std::vector<std::string> h{first};
    for (int id : ids) h.push_back("tx" + std::to_string(id));
    return h;
}

std::size_t index_of_tx(const exp::Scenario& s, int id) {
    const auto ids = s.tx_ids();
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw ValidationError("unknown transmitter " + std::to_string(id));
    return static_cast<std::size_t>(it - ids.begin());
}

// ---------------------------------------------------------------------------

int cmd_validate(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    const auto& net = s.flow.network;
    std::size_t inlets = 0, outlets = 0;
    for (const auto& n : net.nodes()) {
        inlets += n.kind == net::NodeKind::Inlet;
        outlets += n.kind == net::NodeKind::Outlet;
    }
    io::CsvWriter csv(dir / "transmitters.csv",
                      {"tx", "pipe", "z_m", "paths", "mean_arrival_s", "horizon_s", "distance_m"});
    for (std::size_t g = 0; g < s.size(); ++g) {
        const auto& tx = s.topology.transmitters[g];
        csv.row(tx.id, tx.pipe, tx.z, s.cirs[g].components.size(), s.cirs[g].mean_arrival(), s.cirs[g].horizon(),
                exp::tx_rx_distance(s.flow, tx, s.rx()));
    }
    std::printf("ok: %zu nodes (%zu inlets, %zu outlets), %zu pipes, %zu transmitters, receiver in pipe %d\n",
                net.nodes().size(), inlets, outlets, net.pipes().size(), s.size(), s.rx().pipe);
    manifest_for("validate", o).write(dir / "manifest.txt");
    return 0;
}

int cmd_flow(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    io::CsvWriter csv(dir / "flow.csv", {"pipe", "source", "destination", "length_m", "radius_m", "flow_m3s",
                                         "velocity_ms", "dispersion_m2s"});
    const auto& pipes = s.flow.network.pipes();
    for (std::size_t i = 0; i < pipes.size(); ++i)
        csv.row(pipes[i].id, pipes[i].source, pipes[i].destination, pipes[i].length, pipes[i].radius, s.flow.flow[i],
                s.flow.velocity[i], s.flow.dispersion[i]);
    auto m = manifest_for("flow", o);
    m.set("diffusion_m2s", s.topology.diffusion);
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_cir(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    {
        io::CsvWriter csv(dir / "cir_components.csv", {"tx", "component", "weight", "mean_s", "variance_s2"});
        for (const auto& c : s.cirs)
            for (std::size_t k = 0; k < c.components.size(); ++k)
                csv.row(c.tx, k, c.components[k].weight, c.components[k].mean, c.components[k].variance);
    }
    const double Ts = 1.0 / o.fs;
    double horizon = 0.0;
    for (const auto& c : s.cirs) horizon = std::max(horizon, c.horizon(1.0 - 1e-9));
    const auto n = static_cast<std::size_t>(std::ceil(horizon / Ts)) + 1;
    io::CsvWriter csv(dir / "cir_bank.csv", tx_header("t_s", s.tx_ids()));
    std::vector<std::vector<double>> cols;
    for (const auto& c : s.cirs) cols.push_back(c.sample(Ts, n));
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::string> row{io::fmt(static_cast<double>(k) * Ts)};
        for (const auto& col : cols) row.push_back(io::fmt(col[k]));
        csv.row_vec(row);
    }
    auto m = manifest_for("cir", o);
    m.set("fs_hz", o.fs);
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_oracle(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    oracle::ParticleConfig cfg;
    cfg.count = o.particles;
    cfg.seed = o.seed;
    cfg.workers = o.workers;
    if (o.sampler == "ig")
        cfg.sampler = oracle::Sampler::InverseGaussian;
    else if (o.sampler == "em")
        cfg.sampler = oracle::Sampler::EulerMaruyama;
    else
        throw ValidationError("--sampler must be 'ig' or 'em'");

    std::vector<std::size_t> which;
    if (o.tx)
        which.push_back(index_of_tx(s, o.tx));
    else
        for (std::size_t g = 0; g < s.size(); ++g) which.push_back(g);

    io::CsvWriter hist_csv(dir / "oracle_histogram.csv",
                           {"tx", "bin_lo_s", "bin_hi_s", "particle_fraction", "analytic_fraction"});
    io::CsvWriter sum_csv(dir / "oracle_summary.csv", {"tx", "launched", "arrived", "l1_distance"});
    for (std::size_t g : which) {
        const auto& tx = s.topology.transmitters[g];
        const auto r = oracle::simulate_particles(s.flow, tx, s.rx(), cfg);
        const auto& h = s.cirs[g];
        const double hi = h.horizon(0.9999);
        const auto hist = oracle::histogram(r.arrivals, 0.0, hi, o.bins);
        const double n = static_cast<double>(r.launched());
        double l1 = 0.0, mass = 0.0;
        for (std::size_t b = 0; b < o.bins; ++b) {
            double p = 0.0;
            for (const auto& c : h.components)
                p += c.weight * (channel::ig_cdf(c.mean, c.scale(), hist.edges[b + 1]) -
                                 channel::ig_cdf(c.mean, c.scale(), hist.edges[b]));
            const double got = static_cast<double>(hist.counts[b]) / n;
            l1 += std::abs(got - p);
            mass += p;
            hist_csv.row(tx.id, hist.edges[b], hist.edges[b + 1], got, p);
        }
        sum_csv.row(tx.id, r.launched(), r.arrivals.size(), l1 / mass);
    }
    auto m = manifest_for("oracle", o);
    m.set("particles", io::fmt(o.particles));
    m.set("sampler", o.sampler);
    m.set("bins", io::fmt(o.bins));
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_simulate(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    if (!o.tx) throw ValidationError("--tx is required");
    const std::size_t g = index_of_tx(s, o.tx);
    const auto rec = exp::make_receiver(s, o.fs, 1e3, o.workers);
    Rng rng = make_rng(o.seed, 0);
    const double m = exp::draw_release_count(s.topology.release, rng);
    const auto raw = sensing::noisy_samples(rec.unit[g], m, o.noise_var, rng);
    io::CsvWriter csv(dir / "signal.csv", {"t_s", "count"});
    for (std::size_t k = 0; k < raw.size(); ++k) csv.row(static_cast<double>(k) / o.fs, raw[k]);
    auto man = manifest_for("simulate", o);
    man.set("tx", io::fmt(o.tx));
    man.set("fs_hz", o.fs);
    man.set("noise_variance", o.noise_var);
    man.set("release_count", m);
    man.write(dir / "manifest.txt");
    return 0;
}

std::vector<double> read_signal(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<double> v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cell = line.substr(line.find_last_of(',') == std::string::npos ? 0 : line.find_last_of(',') + 1);
        double x = 0.0;
        const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (ec != std::errc() || p != cell.data() + cell.size()) {
            if (lineno == 1) continue;  // header
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected a number, got '" + cell + "'");
        }
        v.push_back(x);
    }
    return v;
}

int cmd_localize(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    if (o.signal.empty()) throw ValidationError("--signal is required");
    const auto raw = read_signal(o.signal);
    const auto rec = exp::make_receiver(s, o.fs, 1e3, o.workers);
    const auto res = mf::localize(raw, rec.bank, o.threshold);
    {
        io::CsvWriter csv(dir / "mf_peaks.csv", {"tx", "y_max"});
        for (std::size_t g = 0; g < s.size(); ++g) csv.row(rec.bank.tx_ids[g], res.y_max[g]);
    }
    io::CsvWriter csv(dir / "localization.csv",
                      {"decision", "tx_est", "candidate", "y_max", "peak_to_noise", "peak_index"});
    csv.row(mf::to_string(res.decision), res.tx, rec.bank.tx_ids[res.candidate], res.y_max[res.candidate],
            res.peak_to_noise, res.peak_index);
    std::printf("%s %d\n", mf::to_string(res.decision), res.tx);
    auto m = manifest_for("localize", o);
    m.set("signal", o.signal);
    m.set("fs_hz", o.fs);
    m.set("threshold", o.threshold);
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_cm(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    const std::size_t n = trials_or(o, 100);
    const auto rec = exp::make_receiver(s, o.fs, o.noise_var, o.workers);
    const auto cm = exp::build_confusion_matrix(s, rec, n, o.noise_var, o.seed, o.workers);
    const auto ids = s.tx_ids();
    io::write_matrix(dir / "cm.csv", ids, cm.cm);
    io::write_matrix(dir / "cm_binary.csv", ids, cluster::binarize_cm(cm.cm));
    {
        io::CsvWriter csv(dir / "missed.csv", {"tx", "missed_fraction"});
        for (std::size_t g = 0; g < ids.size(); ++g) csv.row(ids[g], cm.missed[g]);
    }
    auto m = manifest_for("cm", o);
    m.set("fs_hz", o.fs);
    m.set("noise_variance", o.noise_var);
    m.set("mean_snr_db", exp::mean_snr_db(s, o.noise_var));
    m.set("trials_per_tx", io::fmt(n));
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_csm(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    const auto grid = cluster::sample_on_grid(s.cirs);
    const auto csm = cluster::build_csm(grid, o.zero_lag ? cluster::Alignment::ZeroLag : cluster::Alignment::MaxLag);
    const auto ids = s.tx_ids();
    io::write_matrix(dir / "csm.csv", ids, csm);
    io::write_matrix(dir / "csm_binary.csv", ids, cluster::binarize_csm(csm));
    auto m = manifest_for("csm", o);
    m.set("alignment", o.zero_lag ? "zero-lag" : "max-lag");
    m.set("grid_dt_s", grid.dt);
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_cluster(const Options& o) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    const std::size_t n = trials_or(o, 100);
    const auto a = exp::analytic_clusterings(s, o.seed);
    const auto rec = exp::make_receiver(s, o.fs, o.noise_var, o.workers);
    const auto cm = exp::build_confusion_matrix(s, rec, n, o.noise_var, o.seed, o.workers);
    const auto cm_part = cluster::louvain(cluster::binarize_cm(cm.cm), true, o.seed);
    const auto ids = s.tx_ids();
    {
        io::CsvWriter csv(dir / "partition.csv", {"tx", "cm_cluster", "csm_cluster", "kmeans_cluster"});
        for (std::size_t g = 0; g < ids.size(); ++g)
            csv.row(ids[g], cm_part.labels[g], a.csm_partition.labels[g], a.kmeans_partition.labels[g]);
    }
    io::CsvWriter csv(dir / "metrics.csv", {"metric", "value"});
    csv.row("silhouette_cm_binary", cluster::silhouette(cm_part, a.distances));
    csv.row("silhouette_csm_binary", cluster::silhouette(a.csm_partition, a.distances));
    csv.row("silhouette_kmeans", cluster::silhouette(a.kmeans_partition, a.distances));
    csv.row("ari_cm_cm", cluster::adjusted_rand_index(cm_part, cm_part));
    csv.row("ari_cm_csm", cluster::adjusted_rand_index(cm_part, a.csm_partition));
    csv.row("ari_cm_kmeans", cluster::adjusted_rand_index(cm_part, a.kmeans_partition));
    csv.row("ari_csm_kmeans", cluster::adjusted_rand_index(a.csm_partition, a.kmeans_partition));
    csv.row("clusters_cm_binary", cm_part.cluster_count());
    csv.row("clusters_csm_binary", a.csm_partition.cluster_count());
    auto m = manifest_for("cluster", o);
    m.set("fs_hz", o.fs);
    m.set("noise_variance", o.noise_var);
    m.set("trials_per_tx", io::fmt(n));
    m.write(dir / "manifest.txt");
    return 0;
}

exp::SweepConfig sweep_config(const Options& o, bool fs_given) {
    exp::SweepConfig cfg;
    if (!o.snr_grid.empty()) cfg.snr_db = parse_list(o.snr_grid);
    cfg.fs = fs_given ? std::vector<double>{o.fs} : parse_list(o.fs_grid);
    cfg.trials = trials_or(o, 200);
    cfg.seed = o.seed;
    cfg.workers = o.workers;
    if (o.sampling == "uniform")
        cfg.sampling = exp::TxSampling::Uniform;
    else if (o.sampling == "blocks")
        cfg.sampling = exp::TxSampling::Blocks;
    else
        throw ValidationError("--sampling must be 'uniform' or 'blocks'");
    return cfg;
}

void describe_sweep(io::Manifest& m, const exp::SweepConfig& cfg) {
    std::string snr, fsl;
    for (double v : cfg.snr_db) snr += (snr.empty() ? "" : ",") + io::fmt(v);
    for (double v : cfg.fs) fsl += (fsl.empty() ? "" : ",") + io::fmt(v);
    m.set("snr_grid_db", snr);
    m.set("fs_grid_hz", fsl);
    m.set("sweep_trials", io::fmt(cfg.trials));
    m.set("tx_sampling", cfg.sampling == exp::TxSampling::Uniform ? "uniform" : "blocks");
}

int cmd_sweep(const Options& o, bool fs_given) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    const auto cfg = sweep_config(o, fs_given);
    const auto a = exp::analytic_clusterings(s, o.seed);
    const auto rows = exp::run_sweep(s, cfg, a.csm_partition, a.kmeans_partition);
    exp::write_sweep(dir / "sweep.csv", rows);
    auto m = manifest_for("sweep", o);
    describe_sweep(m, cfg);
    m.write(dir / "manifest.txt");
    return 0;
}

int cmd_study(const Options& o, bool fs_given) {
    const auto s = scenario_of(o);
    const auto dir = out_dir(o);
    exp::StudyConfig cfg;
    cfg.fs = o.fs;
    cfg.noise_variance = o.noise_var;
    cfg.cm_trials = trials_or(o, 100);
    cfg.sweep = sweep_config(o, false);
    if (fs_given && std::find(cfg.sweep.fs.begin(), cfg.sweep.fs.end(), o.fs) == cfg.sweep.fs.end())
        cfg.sweep.fs.insert(cfg.sweep.fs.begin(), o.fs);
    cfg.seed = o.seed;
    auto m = manifest_for("study", o);
    describe_sweep(m, cfg.sweep);
    const auto res = exp::run_study(s, cfg, dir, m);
    std::printf("mean SNR at noise variance %g: %.2f dB; clusters: CM %d, CSM %d\n", o.noise_var,
                res.default_snr_db, res.cm_partition.cluster_count(), res.analytic.csm_partition.cluster_count());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Source localization in pipe networks from a single molecule sensor"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--network", o.network, "topology file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_flag("--exact-observation", o.exact_model, "integrate the flux over the receiver length");
        sub->add_option("--out", o.out, "output directory");
    };
    auto sensing_opts = [&](CLI::App* sub) {
        sub->add_option("--fs", o.fs, "sampling rate in Hz")->check(CLI::PositiveNumber);
        sub->add_option("--noise-var", o.noise_var, "sensor noise variance")->check(CLI::NonNegativeNumber);
        sub->add_option("--workers", o.workers, "worker threads (0 = all cores)");
    };

    auto* validate = app.add_subcommand("validate", "check a topology and list its transmitters");
    common(validate);
    auto* flow = app.add_subcommand("flow", "solve the steady flow field");
    common(flow);
    auto* cir = app.add_subcommand("cir", "dump the channel impulse responses");
    common(cir);
    cir->add_option("--fs", o.fs, "sampling rate in Hz")->check(CLI::PositiveNumber);

    auto* orc = app.add_subcommand("oracle", "compare CIRs against a particle simulation");
    common(orc);
    orc->add_option("--particles", o.particles, "particles per transmitter");
    orc->add_option("--sampler", o.sampler, "ig (exact pipe transit) or em (Euler-Maruyama)");
    orc->add_option("--bins", o.bins, "histogram bins");
    orc->add_option("--tx", o.tx, "single transmitter id (default: all)");
    orc->add_option("--workers", o.workers, "worker threads (0 = all cores)");

    auto* simulate = app.add_subcommand("simulate", "write one noisy received signal");
    common(simulate);
    sensing_opts(simulate);
    simulate->add_option("--tx", o.tx, "active transmitter id")->required();

    auto* localize = app.add_subcommand("localize", "localize the source of a received signal");
    common(localize);
    sensing_opts(localize);
    localize->add_option("--signal", o.signal, "CSV file; the last column holds the samples")
        ->required()
        ->check(CLI::ExistingFile);
    localize->add_option("--threshold", o.threshold, "peak-power to noise threshold");

    auto* cm = app.add_subcommand("cm", "empirical confusion matrix");
    common(cm);
    sensing_opts(cm);
    cm->add_option("--trials", o.trials, "trials per transmitter (default 100)");

    auto* csm = app.add_subcommand("csm", "cosine similarity matrix of the CIRs");
    common(csm);
    csm->add_flag("--zero-lag", o.zero_lag, "compare CIRs without time alignment");

    auto* clus = app.add_subcommand("cluster", "cluster transmitters and score the partitions");
    common(clus);
    sensing_opts(clus);
    clus->add_option("--trials", o.trials, "confusion-matrix trials per transmitter (default 100)");

    auto* sweep = app.add_subcommand("sweep", "accuracy and missed detection over SNR");
    common(sweep);
    sensing_opts(sweep);
    sweep->add_option("--trials", o.trials, "trials per grid point (default 200)");
    sweep->add_option("--snr-grid", o.snr_grid, "comma separated SNR values in dB");
    sweep->add_option("--fs-grid", o.fs_grid, "comma separated sampling rates in Hz");
    sweep->add_option("--sampling", o.sampling, "uniform or blocks");

    auto* study = app.add_subcommand("study", "full study: CIRs, matrices, clusters, sweep, metrics");
    common(study);
    sensing_opts(study);
    study->add_option("--trials", o.trials, "confusion-matrix trials per transmitter (default 100)");
    study->add_option("--snr-grid", o.snr_grid, "comma separated SNR values in dB");
    study->add_option("--fs-grid", o.fs_grid, "comma separated sampling rates in Hz");
    study->add_option("--sampling", o.sampling, "uniform or blocks");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        const bool fs_given = sub->get_option_no_throw("--fs") && sub->count("--fs") > 0;
        if (name == "validate") return cmd_validate(o);
        if (name == "flow") return cmd_flow(o);
        if (name == "cir") return cmd_cir(o);
        if (name == "oracle") return cmd_oracle(o);
        if (name == "simulate") return cmd_simulate(o);
        if (name == "localize") return cmd_localize(o);
        if (name == "cm") return cmd_cm(o);
        if (name == "csm") return cmd_csm(o);
        if (name == "cluster") return cmd_cluster(o);
        if (name == "sweep") return cmd_sweep(o, fs_given);
        if (name == "study") return cmd_study(o, fs_given);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
