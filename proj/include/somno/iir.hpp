#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "somno/errors.hpp"
#include "somno/signal.hpp"

namespace somno {

/// One second-order section, denominator normalized to a0 = 1.
struct Biquad {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

using SosCascade = std::vector<Biquad>;

enum class FilterFamily { Chebyshev2Lowpass, ButterworthBandpass };

struct IirFilterSpec {
    FilterFamily family = FilterFamily::Chebyshev2Lowpass;
    int order = 1;
    std::vector<double> edges_hz;          // one edge for lowpass, two for bandpass
    double stopband_attenuation_db = 40.0; // chebyshev2 only
};

namespace detail {

using cd = std::complex<double>;

struct Zpk {
    std::vector<cd> zeros;
    std::vector<cd> poles;
    double gain = 1.0;
};

/// Analog Chebyshev type II lowpass prototype, stopband edge at 1 rad/s.
inline Zpk cheby2_prototype(int order, double stopband_db) {
    const double eps = 1.0 / std::sqrt(std::pow(10.0, stopband_db / 10.0) - 1.0);
    const double mu = std::asinh(1.0 / eps) / order;
    Zpk out;
    for (int k = 0; k < order; ++k) {
        const double theta = M_PI * (2.0 * k + 1.0) / (2.0 * order);
        const double c = std::cos(theta);
        // T_n(1/w) = 0 gives imaginary zeros; the middle angle of an odd
        // order has cos(theta) = 0 (zero at infinity) and is skipped.
        if (std::abs(c) > 1e-12) out.zeros.emplace_back(0.0, 1.0 / c);
        const cd inverse_pole(-std::sinh(mu) * std::sin(theta),
                              std::cosh(mu) * std::cos(theta));
        out.poles.push_back(1.0 / inverse_pole);
    }
    cd g(1.0, 0.0);
    for (const cd& p : out.poles) g *= -p;
    for (const cd& z : out.zeros) g /= -z;
    out.gain = g.real(); // conjugate symmetry makes this real
    return out;
}

/// Analog Butterworth lowpass prototype, -3 dB at 1 rad/s.
inline Zpk butter_prototype(int order) {
    Zpk out;
    for (int k = 0; k < order; ++k) {
        const double theta = M_PI * (2.0 * k + order + 1.0) / (2.0 * order);
        out.poles.push_back(std::polar(1.0, theta));
    }
    out.gain = 1.0;
    return out;
}

inline Zpk lp_to_lp(const Zpk& proto, double wc) {
    Zpk out;
    for (const cd& z : proto.zeros) out.zeros.push_back(z * wc);
    for (const cd& p : proto.poles) out.poles.push_back(p * wc);
    const int degree = static_cast<int>(proto.poles.size() - proto.zeros.size());
    out.gain = proto.gain * std::pow(wc, degree);
    return out;
}

inline Zpk lp_to_bp(const Zpk& proto, double w0, double bw) {
    Zpk out;
    auto transform = [&](const cd& r, std::vector<cd>& dst) {
        const cd half = r * (bw / 2.0);
        const cd disc = std::sqrt(half * half - w0 * w0);
        dst.push_back(half + disc);
        dst.push_back(half - disc);
    };
    for (const cd& z : proto.zeros) transform(z, out.zeros);
    for (const cd& p : proto.poles) transform(p, out.poles);
    const int degree = static_cast<int>(proto.poles.size() - proto.zeros.size());
    for (int i = 0; i < degree; ++i) out.zeros.emplace_back(0.0, 0.0);
    out.gain = proto.gain * std::pow(bw, degree);
    return out;
}

/// Bilinear transform with sampling rate fs; zeros at infinity land at z = -1.
inline Zpk bilinear(const Zpk& analog, double fs) {
    const double fs2 = 2.0 * fs;
    Zpk out;
    cd gain_num(1.0, 0.0), gain_den(1.0, 0.0);
    for (const cd& z : analog.zeros) {
        out.zeros.push_back((fs2 + z) / (fs2 - z));
        gain_num *= fs2 - z;
    }
    for (const cd& p : analog.poles) {
        out.poles.push_back((fs2 + p) / (fs2 - p));
        gain_den *= fs2 - p;
    }
    const int degree = static_cast<int>(analog.poles.size() - analog.zeros.size());
    for (int i = 0; i < degree; ++i) out.zeros.emplace_back(-1.0, 0.0);
    out.gain = analog.gain * (gain_num / gain_den).real();
    return out;
}

/// Splits roots into complex-conjugate representatives and reals.
inline void partition_roots(const std::vector<cd>& roots, std::vector<cd>& pairs,
                            std::vector<double>& reals) {
    constexpr double tol = 1e-10;
    for (const cd& r : roots) {
        if (r.imag() > tol)
            pairs.push_back(r);
        else if (r.imag() >= -tol)
            reals.push_back(r.real());
        // negative-imag roots are the conjugates of the collected ones
    }
}

/// Groups a zpk into biquads: conjugate pole pairs matched to the nearest
/// remaining zero pair, poles nearest the unit circle placed last. Overall
/// gain is spread evenly across sections. Odd orders leave one first-order
/// section (a2 = b2 = 0).
inline SosCascade zpk_to_sos(const Zpk& zpk) {
    std::vector<cd> pole_pairs, zero_pairs;
    std::vector<double> pole_reals, zero_reals;
    partition_roots(zpk.poles, pole_pairs, pole_reals);
    partition_roots(zpk.zeros, zero_pairs, zero_reals);

    if (zpk.poles.size() != zpk.zeros.size())
        throw NumericError("zpk_to_sos: zero/pole count mismatch");

    std::sort(pole_pairs.begin(), pole_pairs.end(),
              [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });
    // Real roots paired off smallest-with-largest so bandpass zeros at +1/-1
    // combine into (1 - z^-2) numerators.
    std::sort(zero_reals.begin(), zero_reals.end());
    std::sort(pole_reals.begin(), pole_reals.end());

    struct SectionRoots {
        double sum, prod; // quadratic 1 - sum*z^-1 + prod*z^-2
    };
    auto from_pair = [](const cd& r) { return SectionRoots{2.0 * r.real(), std::norm(r)}; };
    auto from_reals = [](double r1, double r2) { return SectionRoots{r1 + r2, r1 * r2}; };

    std::vector<SectionRoots> den;
    std::vector<cd> den_rep;
    for (const cd& p : pole_pairs) {
        den.push_back(from_pair(p));
        den_rep.push_back(p);
    }
    for (std::size_t i = 0; i + 1 < pole_reals.size(); i += 2) {
        den.push_back(from_reals(pole_reals[i], pole_reals[i + 1]));
        den_rep.emplace_back(pole_reals[i], 0.0);
    }
    if (pole_reals.size() % 2 == 1) {
        den.push_back(SectionRoots{pole_reals.back(), 0.0});
        den_rep.emplace_back(pole_reals.back(), 0.0);
    }

    std::vector<SectionRoots> num_pool;
    std::vector<cd> num_rep;
    for (const cd& z : zero_pairs) {
        num_pool.push_back(from_pair(z));
        num_rep.push_back(z);
    }
    {
        std::size_t i = 0, j = zero_reals.size();
        while (j - i >= 2) {
            --j;
            num_pool.push_back(from_reals(zero_reals[i], zero_reals[j]));
            num_rep.emplace_back(zero_reals[i], 0.0);
            ++i;
        }
        if (j - i == 1) {
            num_pool.push_back(SectionRoots{zero_reals[i], 0.0});
            num_rep.emplace_back(zero_reals[i], 0.0);
        }
    }

    if (den.size() != num_pool.size())
        throw NumericError("zpk_to_sos: section count mismatch");

    const double section_gain = std::pow(std::abs(zpk.gain), 1.0 / den.size());
    const double sign = zpk.gain < 0.0 ? -1.0 : 1.0;

    SosCascade sos;
    std::vector<bool> used(num_pool.size(), false);
    // Assign zeros to poles starting from the pole nearest the unit circle.
    for (std::size_t pi = den.size(); pi-- > 0;) {
        std::size_t best = num_pool.size();
        double best_dist = 0.0;
        for (std::size_t zi = 0; zi < num_pool.size(); ++zi) {
            if (used[zi]) continue;
            const double d = std::abs(num_rep[zi] - den_rep[pi]);
            if (best == num_pool.size() || d < best_dist) {
                best = zi;
                best_dist = d;
            }
        }
        used[best] = true;
        Biquad s;
        const double g = pi == 0 ? section_gain * sign : section_gain;
        s.b0 = g;
        s.b1 = -g * num_pool[best].sum;
        s.b2 = g * num_pool[best].prod;
        s.a1 = -den[pi].sum;
        s.a2 = den[pi].prod;
        sos.push_back(s);
    }
    std::reverse(sos.begin(), sos.end()); // unit-circle-nearest section last
    return sos;
}

inline double prewarp(double freq_hz, double fs) {
    return 2.0 * fs * std::tan(M_PI * freq_hz / fs);
}

} // namespace detail

/// Designs the requested IIR filter as a cascade of second-order sections.
inline SosCascade design_filter(const IirFilterSpec& spec, const Rational& rate) {
    const double fs = rate.value();
    const double nyq = 0.5 * fs;
    if (spec.order < 1) throw ConfigError("design_filter: order must be >= 1");
    for (const double e : spec.edges_hz) {
        if (!(e > 0.0)) throw ConfigError("design_filter: edge frequencies must be positive");
        if (e >= nyq)
            throw ConfigError("design_filter: edge " + std::to_string(e) +
                              " Hz is at or above Nyquist " + std::to_string(nyq) + " Hz");
    }

    detail::Zpk digital;
    switch (spec.family) {
        case FilterFamily::Chebyshev2Lowpass: {
            if (spec.edges_hz.size() != 1)
                throw ConfigError("design_filter: chebyshev2 lowpass needs exactly one edge");
            if (!(spec.stopband_attenuation_db > 0.0))
                throw ConfigError("design_filter: stopband attenuation must be positive dB");
            const auto proto = detail::cheby2_prototype(spec.order, spec.stopband_attenuation_db);
            const double wc = detail::prewarp(spec.edges_hz[0], fs);
            digital = detail::bilinear(detail::lp_to_lp(proto, wc), fs);
            break;
        }
        case FilterFamily::ButterworthBandpass: {
            if (spec.edges_hz.size() != 2 || !(spec.edges_hz[0] < spec.edges_hz[1]))
                throw ConfigError("design_filter: bandpass needs two edges with low < high");
            const auto proto = detail::butter_prototype(spec.order);
            const double w1 = detail::prewarp(spec.edges_hz[0], fs);
            const double w2 = detail::prewarp(spec.edges_hz[1], fs);
            const double w0 = std::sqrt(w1 * w2);
            digital = detail::bilinear(detail::lp_to_bp(proto, w0, w2 - w1), fs);
            break;
        }
    }
    return detail::zpk_to_sos(digital);
}

/// Cascade frequency response H(e^{j 2 pi f / fs}).
inline std::complex<double> sos_response(const SosCascade& sos, double freq_hz,
                                         const Rational& rate) {
    const double w = 2.0 * M_PI * freq_hz / rate.value();
    const std::complex<double> e1 = std::polar(1.0, -w);
    const std::complex<double> e2 = std::polar(1.0, -2.0 * w);
    std::complex<double> h(1.0, 0.0);
    for (const Biquad& s : sos)
        h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2);
    return h;
}

/// Causal single-pass application, direct form II transposed per section.
inline SampledSignal filter_apply(const SampledSignal& input, const SosCascade& sos) {
    require_nonempty(input, "filter_apply");
    require_finite(input, "filter_apply");
    SampledSignal out;
    out.rate = input.rate;
    out.samples = input.samples;
    for (const Biquad& s : sos) {
        double z1 = 0.0, z2 = 0.0;
        for (double& x : out.samples) {
            const double y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            x = y;
        }
    }
    for (const double v : out.samples)
        if (!std::isfinite(v)) throw NumericError("filter_apply: filter output diverged");
    return out;
}

} // namespace somno
