#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "somno/errors.hpp"
#include "somno/signal.hpp"

namespace somno {

namespace detail {

/// Modified Bessel function of the first kind, order 0 (power series).
inline double bessel_i0(double x) {
    const double half = x / 2.0;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < sum * 1e-18) break;
    }
    return sum;
}

inline double kaiser(double beta, double frac) {
    // frac in [-1, 1] across the window
    const double arg = 1.0 - frac * frac;
    if (arg < 0.0) return 0.0;
    return bessel_i0(beta * std::sqrt(arg)) / bessel_i0(beta);
}

/// Kaiser-windowed sinc interpolation kernel for an up-L / down-M resampler:
/// max(L, M) polyphase branches of taps_per_phase taps each, every upsampling
/// phase normalized to unit sum so DC passes exactly.
inline std::vector<double> polyphase_kernel(std::int64_t up, std::int64_t down,
                                            int taps_per_phase, double beta) {
    const std::int64_t half = static_cast<std::int64_t>(taps_per_phase) * std::max(up, down) / 2;
    const std::int64_t len = 2 * half + 1;
    // cutoff at the smaller of the two Nyquists, as a fraction of the
    // upsampled-domain Nyquist
    const double fc = 1.0 / static_cast<double>(std::max(up, down));
    std::vector<double> h(static_cast<std::size_t>(len));
    for (std::int64_t n = 0; n < len; ++n) {
        const double t = static_cast<double>(n - half);
        const double x = fc * t;
        const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
        h[static_cast<std::size_t>(n)] =
            fc * sinc * kaiser(beta, t / static_cast<double>(half));
    }
    for (std::int64_t phase = 0; phase < up; ++phase) {
        double s = 0.0;
        for (std::int64_t n = phase; n < len; n += up) s += h[static_cast<std::size_t>(n)];
        if (s != 0.0)
            for (std::int64_t n = phase; n < len; n += up) h[static_cast<std::size_t>(n)] /= s;
    }
    return h;
}

} // namespace detail

/// Rational-rate resampling by anti-aliased polyphase interpolation. The
/// output has exactly floor(n_in * target / input) samples; past either end
/// the boundary sample is held, so constants resample to themselves.
inline SampledSignal resample(const SampledSignal& input, const Rational& target_rate) {
    require_nonempty(input, "resample");
    require_finite(input, "resample");

    // ratio = target/input reduced to up/down
    const std::int64_t g1 = std::gcd(target_rate.num, input.rate.num);
    const std::int64_t g2 = std::gcd(input.rate.den, target_rate.den);
    const std::int64_t up = (target_rate.num / g1) * (input.rate.den / g2);
    const std::int64_t down = (input.rate.num / g1) * (target_rate.den / g2);

    const std::int64_t n_in = input.size();
    const std::int64_t n_out = n_in * up / down;
    if (n_out < 1) throw DataError("resample: input too short for requested rate");

    if (up == down) {
        SampledSignal out = input;
        out.rate = target_rate;
        return out;
    }

    constexpr int kTapsPerPhase = 32;
    constexpr double kBeta = 8.0;
    const std::vector<double> h = detail::polyphase_kernel(up, down, kTapsPerPhase, kBeta);
    const std::int64_t len = static_cast<std::int64_t>(h.size());
    const std::int64_t center = (len - 1) / 2;

    SampledSignal out;
    out.rate = target_rate;
    out.samples.resize(static_cast<std::size_t>(n_out));
    const double* x = input.samples.data();
    const auto ceil_div = [](std::int64_t a, std::int64_t b) {
        return a >= 0 ? (a + b - 1) / b : -((-a) / b);
    };
    for (std::int64_t m = 0; m < n_out; ++m) {
        // position of output sample m in the up-sampled grid
        const std::int64_t u = m * down + center;
        // input index range covering the full kernel support
        const std::int64_t i_lo = ceil_div(u - (len - 1), up);
        const std::int64_t i_hi = u / up;
        double acc = 0.0;
        for (std::int64_t i = i_lo; i <= i_hi; ++i) {
            const std::int64_t xi = i < 0 ? 0 : (i >= n_in ? n_in - 1 : i);
            acc += x[xi] * h[static_cast<std::size_t>(u - i * up)];
        }
        out.samples[static_cast<std::size_t>(m)] = acc;
    }
    return out;
}

} // namespace somno
