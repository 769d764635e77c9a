#pragma once

// Matched-filter bank for colored noise and the localization decision rule.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "fft.hpp"
#include "sensing.hpp"
#include "toeplitz.hpp"

namespace mightloc::mf {

inline constexpr double kDefaultThreshold = 20.0;
inline constexpr double kDecayLevel = 1e-6;      // template end, relative to its peak
inline constexpr double kRidge = 1e-10;          // diagonal loading relative to R_nn[0]
inline constexpr double kNoiseFloorFraction = 0.1;

struct NoiseCovariance {
    double noise_variance = 0.0;
    std::vector<double> acf;  // R_nn[0..M-1], diagonal loading included in acf[0]
    linalg::SymmetricToeplitz matrix;

    std::size_t size() const { return acf.size(); }
};

/// sigma^2 (h * h)[k] for k = 0..M-1, loaded with kRidge R_nn[0] on the diagonal.
inline NoiseCovariance noise_covariance(const sensing::LowPassFilter& filt, double noise_variance, std::size_t M) {
    if (!(noise_variance > 0.0)) throw ValidationError("noise variance must be > 0 to build a matched filter");
    if (M == 0) throw ValidationError("matched filter length must be >= 1");
    const auto& h = filt.taps;
    NoiseCovariance nc;
    nc.noise_variance = noise_variance;
    nc.acf.assign(M, 0.0);
    for (std::size_t k = 0; k < std::min(M, h.size()); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i + k < h.size(); ++i) acc += h[i] * h[i + k];
        nc.acf[k] = noise_variance * acc;
    }
    if (!(nc.acf[0] > 0.0)) throw SolverError("singular noise covariance");
    nc.acf[0] *= 1.0 + kRidge;
    nc.matrix = linalg::SymmetricToeplitz(nc.acf);
    return nc;
}

struct MatchedFilterBank {
    std::vector<int> tx_ids;                      // bank order
    std::vector<std::vector<double>> templates;   // normalized, LP-filtered expected signals, length M
    std::vector<std::vector<double>> filters;     // v_g, length M
    std::vector<linalg::SolveReport> solves;
    NoiseCovariance noise;
    sensing::LowPassFilter lowpass;
    std::size_t M = 0;
    std::size_t raw_length = 0;  // samples used to synthesize the templates
    double Ts = 1.0;

    std::size_t size() const { return filters.size(); }

    /// Spectra of the time-reversed filters for FFT length n.
    const std::vector<std::vector<fft::Complex>>& spectra(std::size_t n) const {
        std::lock_guard lock(cache_->mutex);
        auto& slot = cache_->by_size[n];
        if (slot.empty()) {
            slot.reserve(filters.size());
            for (const auto& v : filters) {
                std::vector<double> rev(v.rbegin(), v.rend());
                slot.push_back(fft::rfft(rev, n));
            }
        }
        return slot;
    }

private:
    struct Cache {
        std::mutex mutex;
        std::map<std::size_t, std::vector<std::vector<fft::Complex>>> by_size;
    };
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

/// Expected observation for one molecule sampled at t = k Ts, k = 0..n-1.
inline std::vector<double> unit_observation(const channel::ChannelResponse& resp, const net::FlowField& flow,
                                            double Ts, std::size_t n,
                                            channel::ObservationModel model = channel::ObservationModel::Uniform) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * Ts;
        out[k] = model == channel::ObservationModel::Exact ? channel::expected_observation_exact(resp, flow, 1.0, t)
                                                          : channel::expected_observation(resp, flow, 1.0, t);
    }
    return out;
}

/// Samples needed to cover every response up to its 1 - 1e-9 quantile plus
/// one filter length.
inline std::size_t template_raw_length(std::span<const channel::ChannelResponse> bank, double Ts,
                                       const sensing::LowPassFilter& filt) {
    double horizon = 0.0;
    for (const auto& h : bank) horizon = std::max(horizon, h.horizon(1.0 - 1e-9));
    return static_cast<std::size_t>(std::ceil(horizon / Ts)) + 1 + filt.taps.size();
}

/// Zero-pads by the filter group delay on both sides, filters and divides by
/// the maximum. Sample i of the result belongs to time (i - delay) Ts.
inline std::vector<double> preprocess(std::span<const double> raw, const sensing::LowPassFilter& filt) {
    if (raw.empty()) throw SignalError("empty received signal");
    const std::size_t pad = filt.group_delay();
    sensing::SampledSignal s;
    s.samples.assign(raw.size() + 2 * pad, 0.0);
    std::copy(raw.begin(), raw.end(), s.samples.begin() + static_cast<std::ptrdiff_t>(pad));
    return sensing::normalize_max(sensing::lp_filter(s, filt)).samples;
}

inline MatchedFilterBank build_bank(std::span<const channel::ChannelResponse> cirs, const net::FlowField& flow,
                                    const sensing::LowPassFilter& filt, const sensing::SensorConfig& cfg,
                                    channel::ObservationModel model = channel::ObservationModel::Uniform,
                                    unsigned workers = 0) {
    if (cirs.empty()) throw ValidationError("build_bank needs at least one CIR");
    cfg.validate();
    if (!(cfg.noise_variance > 0.0)) throw ValidationError("noise variance must be > 0 to build a matched filter");
    for (const auto& h : cirs)
        if (!h.reachable()) throw ChannelError("transmitter " + std::to_string(h.tx) + " does not reach the receiver");

    MatchedFilterBank bank;
    bank.Ts = cfg.Ts();
    bank.lowpass = filt;
    bank.raw_length = template_raw_length(cirs, bank.Ts, filt);
    const std::size_t U = cirs.size();
    bank.templates.resize(U);
    for (const auto& h : cirs) bank.tx_ids.push_back(h.tx);

    parallel_for(U, [&](std::size_t g) {
        sensing::SampledSignal s{unit_observation(cirs[g], flow, bank.Ts, bank.raw_length, model), bank.Ts, 0.0};
        bank.templates[g] = sensing::normalize_max(sensing::lp_filter(s, filt)).samples;
    }, workers);

    std::size_t M = 1;
    for (const auto& t : bank.templates)
        for (std::size_t k = t.size(); k-- > 0;)
            if (std::abs(t[k]) > kDecayLevel) {
                M = std::max(M, k + 1);
                break;
            }
    bank.M = M;
    for (auto& t : bank.templates) t.resize(M);

    bank.noise = noise_covariance(filt, cfg.noise_variance, M);
    bank.filters.resize(U);
    bank.solves.resize(U);
    parallel_for(U, [&](std::size_t g) {
        const auto& tmpl = bank.templates[g];
        auto x = bank.noise.matrix.solve(tmpl, &bank.solves[g]);
        double denom = 0.0;
        for (std::size_t k = 0; k < M; ++k) denom += tmpl[k] * x[k];
        if (!(denom > 0.0)) throw SolverError("matched filter normalizer is not positive");
        for (double& xi : x) xi /= denom;
        bank.filters[g] = std::move(x);
    }, workers);
    return bank;
}

/// y_i[k] = sum_j v_i[j] r[k - M + 1 + j] for k = 0..r.size()-1, zero before the start.
inline std::vector<std::vector<double>> filter_outputs(std::span<const double> r, const MatchedFilterBank& bank) {
    const std::size_t n = fft::good_size(r.size() + bank.M - 1);
    const auto spec = fft::rfft(r, n);
    const auto& filt_spec = bank.spectra(n);
    std::vector<std::vector<double>> y(bank.size());
    std::vector<fft::Complex> prod(spec.size());
    for (std::size_t g = 0; g < bank.size(); ++g) {
        for (std::size_t k = 0; k < spec.size(); ++k) prod[k] = spec[k] * filt_spec[g][k];
        y[g] = fft::irfft(prod, n);
        y[g].resize(r.size());
    }
    return y;
}

enum class Decision { Identified, MissedDetection };

inline const char* to_string(Decision d) { return d == Decision::Identified ? "identified" : "missed"; }

struct LocalizationResult {
    Decision decision = Decision::MissedDetection;
    int tx = 0;                   // identified Tx id, 0 when missed
    std::size_t candidate = 0;    // bank index of i*
    std::vector<double> y_max;    // per bank entry
    double peak_to_noise = 0.0;
    double noise_estimate = 0.0;
    std::size_t peak_index = 0;   // in pre-processed samples

    bool identified() const { return decision == Decision::Identified; }
};

/// Noise variance of an MF output around its peak: samples within 2M of the
/// peak, clipped to [first, y.size()), counted only beyond the points where
/// |y| first falls below 10% of the peak on either side. Returns NaN if no
/// sample qualifies.
inline double estimate_noise(std::span<const double> y, std::size_t peak, std::size_t M, std::size_t first) {
    const double level = kNoiseFloorFraction * std::abs(y[peak]);
    const std::size_t lo = std::max(first, peak >= 2 * M ? peak - 2 * M : 0);
    const std::size_t hi = std::min(y.size() - 1, peak + 2 * M);
    double acc = 0.0;
    std::size_t count = 0;
    std::size_t left = peak;
    while (left > lo && !(std::abs(y[left - 1]) < level)) --left;
    if (left > lo)
        for (std::size_t k = lo; k < left; ++k) {
            acc += y[k] * y[k];
            ++count;
        }
    std::size_t right = peak;
    while (right < hi && !(std::abs(y[right + 1]) < level)) ++right;
    for (std::size_t k = right + 1; k <= hi; ++k) {
        acc += y[k] * y[k];
        ++count;
    }
    return count ? acc / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

inline LocalizationResult localize(std::span<const double> raw, const MatchedFilterBank& bank,
                                   double threshold = kDefaultThreshold) {
    LocalizationResult res;
    res.y_max.assign(bank.size(), 0.0);
    if (raw.size() <= bank.M) throw ValidationError("received signal must be longer than the matched filters");
    std::vector<double> r;
    try {
        r = preprocess(raw, bank.lowpass);
    } catch (const SignalError&) {
        return res;
    }
    // First pre-processed sample that can be non-zero; outputs before
    // first + M - 1 see a partly zero window and carry less noise.
    std::size_t first = 0;
    while (first < raw.size() && raw[first] == 0.0) ++first;

    const auto y = filter_outputs(r, bank);
    for (std::size_t g = 0; g < bank.size(); ++g) res.y_max[g] = *std::max_element(y[g].begin(), y[g].end());
    std::size_t best = 0;
    for (std::size_t g = 1; g < bank.size(); ++g)
        if (std::abs(res.y_max[g] - 1.0) < std::abs(res.y_max[best] - 1.0)) best = g;
    res.candidate = best;
    const auto& yc = y[best];
    res.peak_index = static_cast<std::size_t>(std::max_element(yc.begin(), yc.end()) - yc.begin());
    res.noise_estimate = estimate_noise(yc, res.peak_index, bank.M, first + bank.M - 1);
    const double peak = res.y_max[best];
    if (std::isnan(res.noise_estimate) || res.noise_estimate == 0.0)
        res.peak_to_noise = std::numeric_limits<double>::infinity();
    else
        res.peak_to_noise = peak * peak / res.noise_estimate;
    if (peak > 0.0 && res.peak_to_noise > threshold) {
        res.decision = Decision::Identified;
        res.tx = bank.tx_ids[best];
    }
    return res;
}

}  // namespace mightloc::mf
