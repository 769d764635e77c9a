#pragma once

// Sampled noisy sensor output and the low-pass / normalization pre-processing
// shared by the receiver chain and the matched-filter design.

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "channel.hpp"
#include "fft.hpp"

namespace mightloc::sensing {

struct SensorConfig {
    double fs = 2.0;                // Hz
    double noise_variance = 1e3;    // molecules^2, independent of fs
    std::uint64_t seed = 1;

    double Ts() const { return 1.0 / fs; }
    void validate() const {
        if (!(fs > 0.0)) throw ValidationError("sampling frequency must be > 0");
        if (!(noise_variance >= 0.0)) throw ValidationError("noise variance must be >= 0");
    }
};

/// Uniformly sampled series; sample k sits at t0 + k * Ts.
struct SampledSignal {
    std::vector<double> samples;
    double Ts = 1.0;
    double t0 = 0.0;

    std::size_t size() const { return samples.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * Ts; }
};

struct LowPassFilter {
    std::vector<double> taps;  // odd length, symmetric, unit sum
    double cutoff = 0.0;       // Hz
    double fs = 0.0;           // Hz

    std::size_t group_delay() const { return (taps.size() - 1) / 2; }
};

/// Samples of the expected signal plus white Gaussian sensor noise.
/// `unit_expected` is the expected count for a single released molecule; it is
/// scaled by the release count m. The series covers t = 0 .. horizon.
inline SampledSignal sample_received(const std::function<double(double)>& unit_expected, double m,
                                     const SensorConfig& cfg, double horizon) {
    cfg.validate();
    const double Ts = cfg.Ts();
    const auto n = static_cast<std::size_t>(std::floor(horizon / Ts)) + 1;
    Rng rng{stream_seed(cfg.seed, 0)};
    std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance));
    SampledSignal s{std::vector<double>(n), Ts, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        s.samples[k] = m * unit_expected(static_cast<double>(k) * Ts);
        if (cfg.noise_variance > 0.0) s.samples[k] += noise(rng);
    }
    return s;
}

/// Fast path for repeated trials: scales precomputed unit samples and adds noise
/// drawn from `rng`.
inline std::vector<double> noisy_samples(std::span<const double> unit_samples, double m, double noise_variance,
                                         Rng& rng) {
    std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
    std::vector<double> out(unit_samples.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = m * unit_samples[k];
        if (noise_variance > 0.0) out[k] += noise(rng);
    }
    return out;
}

/// Smallest frequency below which `fraction` of the series' energy lies.
inline double energy_bandwidth(std::span<const double> x, double fs, double fraction = 0.99) {
    if (x.empty()) throw SignalError("empty series");
    const std::size_t n = fft::good_size(8 * x.size());
    const auto spec = fft::rfft(x, n);
    std::vector<double> power(spec.size());
    double total = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        // one-sided: interior bins stand for both +f and -f
        const double w = (k == 0 || (n % 2 == 0 && k == spec.size() - 1)) ? 1.0 : 2.0;
        power[k] = w * std::norm(spec[k]);
        total += power[k];
    }
    if (!(total > 0.0)) throw SignalError("zero-energy series");
    double acc = 0.0;
    const double df = fs / static_cast<double>(n);
    for (std::size_t k = 0; k < power.size(); ++k) {
        if (acc + power[k] >= fraction * total) {
            const double frac = (fraction * total - acc) / power[k];
            return (static_cast<double>(k) + frac) * df;
        }
        acc += power[k];
    }
    return fs / 2.0;
}

/// Hamming-windowed sinc with -6 dB point at `cutoff`, length 4 fs / cutoff
/// rounded up to odd, normalized to unit DC gain.
inline LowPassFilter windowed_sinc(double fs, double cutoff) {
    if (!(fs > 0.0) || !(cutoff > 0.0) || cutoff >= fs / 2.0)
        throw ValidationError("cutoff must lie in (0, fs/2)");
    auto len = static_cast<std::size_t>(std::ceil(4.0 * fs / cutoff));
    if (len % 2 == 0) ++len;
    LowPassFilter f;
    f.cutoff = cutoff;
    f.fs = fs;
    f.taps.resize(len);
    const double fc = cutoff / fs;
    const auto mid = static_cast<double>(len - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
        const double x = static_cast<double>(k) - mid;
        const double sinc = x == 0.0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * x) / (kPi * x);
        const double window = len == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(len - 1));
        f.taps[k] = sinc * window;
        sum += f.taps[k];
    }
    for (double& t : f.taps) t /= sum;
    // exact symmetry
    for (std::size_t k = 0; k < len / 2; ++k) f.taps[len - 1 - k] = f.taps[k];
    return f;
}

/// Low-pass filter whose cutoff follows the widest 99%-energy bandwidth among
/// the sampled impulse responses, capped at 0.45 fs.
inline LowPassFilter design_lowpass(std::span<const channel::ChannelResponse> bank, double fs) {
    if (bank.empty()) throw ValidationError("design_lowpass needs a non-empty CIR bank");
    if (!(fs > 0.0)) throw ValidationError("sampling frequency must be > 0");
    const double Ts = 1.0 / fs;
    double widest = 0.0;
    for (const auto& h : bank) {
        if (!h.reachable()) continue;
        const auto n = static_cast<std::size_t>(std::ceil(h.horizon() / Ts)) + 1;
        const auto x = h.sample(Ts, n);
        widest = std::max(widest, energy_bandwidth(x, fs));
    }
    if (!(widest > 0.0)) throw SignalError("CIR bank carries no energy");
    return windowed_sinc(fs, std::min(0.45 * fs, widest));
}

/// Convolution with the filter taps, trimmed to the input length after removing
/// the (L-1)/2 sample group delay. Samples outside the input count as zero.
inline SampledSignal lp_filter(const SampledSignal& signal, const LowPassFilter& filt) {
    if (signal.samples.empty() || filt.taps.empty()) throw SignalError("lp_filter needs non-empty input");
    const auto& x = signal.samples;
    const auto& h = filt.taps;
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto len = static_cast<std::ptrdiff_t>(h.size());
    const auto delay = static_cast<std::ptrdiff_t>(filt.group_delay());
    SampledSignal out{std::vector<double>(x.size(), 0.0), signal.Ts, signal.t0};
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        // out[i] = sum_j h[j] x[i + delay - j]
        const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, i + delay - (n - 1));
        const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(len - 1, i + delay);
        double acc = 0.0;
        for (std::ptrdiff_t j = j_lo; j <= j_hi; ++j) acc += h[j] * x[i + delay - j];
        out.samples[i] = acc;
    }
    return out;
}

/// Divides by the largest sample. Throws SignalError if that sample is not positive.
inline SampledSignal normalize_max(const SampledSignal& signal) {
    if (signal.samples.empty()) throw SignalError("normalize_max on empty signal");
    const double peak = *std::max_element(signal.samples.begin(), signal.samples.end());
    if (!(peak > 0.0)) throw SignalError("non-positive signal maximum");
    SampledSignal out = signal;
    for (double& v : out.samples) v /= peak;
    return out;
}

}  // namespace mightloc::sensing
