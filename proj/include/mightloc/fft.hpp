#pragma once

// Thin RAII layer over FFTW for real-input transforms.

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

namespace mightloc::fft {

using Complex = std::complex<double>;

/// Smallest 2^a 3^b 5^c >= n.
inline std::size_t good_size(std::size_t n) {
    if (n <= 1) return 1;
    std::size_t best = 1;
    while (best < n) best <<= 1;
    for (std::size_t p5 = 1; p5 < best; p5 *= 5)
        for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
            std::size_t v = p35;
            while (v < n) v <<= 1;
            best = std::min(best, v);
        }
    return best;
}

namespace detail {

struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
    ~Plans() {
        if (forward) fftw_destroy_plan(forward);
        if (inverse) fftw_destroy_plan(inverse);
    }
};

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Plans are cached per size and executed through the new-array interface, which
// FFTW documents as thread-safe. Planning itself is serialized.
inline const Plans& plans(std::size_t n) {
    static std::map<std::size_t, std::unique_ptr<Plans>> cache;
    std::lock_guard lock(planner_mutex());
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<Plans>();
        std::vector<double> re(n);
        std::vector<Complex> co(n / 2 + 1);
        const int len = static_cast<int>(n);
        auto* c = reinterpret_cast<fftw_complex*>(co.data());
        slot->forward = fftw_plan_dft_r2c_1d(len, re.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
        slot->inverse = fftw_plan_dft_c2r_1d(len, c, re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    return *slot;
}

}  // namespace detail

/// Spectrum (n/2+1 bins) of `x` zero-padded to length n.
inline std::vector<Complex> rfft(std::span<const double> x, std::size_t n) {
    std::vector<double> in(n, 0.0);
    std::copy_n(x.begin(), std::min(n, x.size()), in.begin());
    std::vector<Complex> out(n / 2 + 1);
    fftw_execute_dft_r2c(detail::plans(n).forward, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

/// Inverse of rfft, including the 1/n normalization.
inline std::vector<double> irfft(std::span<const Complex> spectrum, std::size_t n) {
    std::vector<Complex> in(spectrum.begin(), spectrum.end());  // c2r overwrites its input
    std::vector<double> out(n);
    fftw_execute_dft_c2r(detail::plans(n).inverse, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    const double scale = 1.0 / static_cast<double>(n);
    for (double& v : out) v *= scale;
    return out;
}

/// Full linear convolution, length a.size() + b.size() - 1.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) return {};
    const std::size_t len = a.size() + b.size() - 1;
    const std::size_t n = good_size(len);
    auto fa = rfft(a, n);
    const auto fb = rfft(b, n);
    for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
    auto out = irfft(fa, n);
    out.resize(len);
    return out;
}

}  // namespace mightloc::fft
