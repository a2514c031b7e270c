#pragma once

// Shared test utilities: spectral probes, independent oracles, temp dirs.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <somno/iir.hpp>
#include <somno/metrics.hpp>

namespace testutil {

/// Least-squares amplitude of a known-frequency sinusoid over [begin, end).
/// Fits a·sin(ωt) + b·cos(ωt) and returns hypot(a, b), so it tolerates
/// arbitrary phase and non-integer period counts.
inline double sine_amplitude(const std::vector<double>& x, double freq_hz, double rate_hz,
                             std::size_t begin, std::size_t end) {
    double ss = 0, sc = 0, cc = 0, xs = 0, xc = 0;
    const double w = 2.0 * M_PI * freq_hz / rate_hz;
    for (std::size_t n = begin; n < end; ++n) {
        const double s = std::sin(w * static_cast<double>(n));
        const double c = std::cos(w * static_cast<double>(n));
        ss += s * s;
        sc += s * c;
        cc += c * c;
        xs += x[n] * s;
        xc += x[n] * c;
    }
    const double det = ss * cc - sc * sc;
    const double a = (xs * cc - xc * sc) / det;
    const double b = (xc * ss - xs * sc) / det;
    return std::hypot(a, b);
}

/// In-place radix-2 FFT (n must be a power of two).
inline void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k], v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Index of the largest-magnitude bin in the one-sided spectrum (excluding DC).
inline std::size_t dominant_bin(const std::vector<double>& x, std::size_t n_fft) {
    std::vector<std::complex<double>> buf(n_fft);
    for (std::size_t i = 0; i < n_fft && i < x.size(); ++i) buf[i] = x[i];
    fft(buf);
    std::size_t best = 1;
    for (std::size_t k = 1; k <= n_fft / 2; ++k)
        if (std::abs(buf[k]) > std::abs(buf[best])) best = k;
    return best;
}

/// Transfer-function magnitude computed directly from the biquad cascade —
/// written independently of the library's own evaluator.
inline double cascade_gain(const somno::SosCascade& sos, double freq_hz, double rate_hz) {
    const std::complex<double> zinv =
        std::exp(std::complex<double>(0.0, -2.0 * M_PI * freq_hz / rate_hz));
    std::complex<double> h(1.0);
    for (const somno::Biquad& s : sos) {
        h *= (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) /
             (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
    }
    return std::abs(h);
}

/// Cohen's kappa recomputed with exact integer arithmetic:
/// κ = (N·trace − Σ row_i·col_i) / (N² − Σ row_i·col_i).
inline double kappa_oracle(const somno::ConfusionMatrix& cm) {
    using I = __int128;
    I total = 0, trace = 0, chance = 0;
    std::int64_t rows[4] = {0, 0, 0, 0}, cols[4] = {0, 0, 0, 0};
    for (int t = 0; t < 4; ++t)
        for (int p = 0; p < 4; ++p) {
            const std::int64_t c = cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            total += c;
            rows[t] += c;
            cols[p] += c;
            if (t == p) trace += c;
        }
    for (int i = 0; i < 4; ++i) chance += static_cast<I>(rows[i]) * cols[i];
    const I num = total * trace - chance;
    const I den = total * total - chance;
    if (den == 0) return trace == total ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("somno_test_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace testutil
