#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "somno/errors.hpp"
#include "somno/iir.hpp"
#include "somno/resample.hpp"
#include "somno/signal.hpp"

namespace somno {

/// Rate all downstream stages run at: 30-s epochs are exactly 1024 samples.
inline Rational canonical_rate() { return Rational{1024, 30}; }
inline constexpr std::int64_t kSamplesPerEpoch = 1024;
inline constexpr std::int64_t kEpochSeconds = 30;

inline void signal_moments(const SampledSignal& s, double& mean, double& stddev) {
    double acc = 0.0;
    for (double v : s.samples) acc += v;
    mean = acc / static_cast<double>(s.size());
    double sq = 0.0;
    for (double v : s.samples) {
        const double d = v - mean;
        sq += d * d;
    }
    stddev = std::sqrt(sq / static_cast<double>(s.size()));
}

/// Clamp every sample to [mean - k*std, mean + k*std] of the input.
inline SampledSignal clip_outliers(const SampledSignal& input, double k) {
    require_nonempty(input, "clip_outliers");
    require_finite(input, "clip_outliers");
    if (!(k > 0.0)) throw ConfigError("clip_outliers: k must be positive");
    double mu, sigma;
    signal_moments(input, mu, sigma);
    const double lo = mu - k * sigma, hi = mu + k * sigma;
    SampledSignal out = input;
    for (double& v : out.samples) v = v < lo ? lo : (v > hi ? hi : v);
    return out;
}

/// Standardize to zero mean, unit population std. Degenerate inputs
/// (std < 1e-12) map to all zeros.
inline SampledSignal zscore(const SampledSignal& input) {
    require_nonempty(input, "zscore");
    require_finite(input, "zscore");
    double mu, sigma;
    signal_moments(input, mu, sigma);
    SampledSignal out = input;
    if (sigma < 1e-12) {
        for (double& v : out.samples) v = 0.0;
        return out;
    }
    const double inv = 1.0 / sigma;
    for (double& v : out.samples) v = (v - mu) * inv;
    return out;
}

inline IirFilterSpec ppg_lowpass_spec() {
    IirFilterSpec s;
    s.family = FilterFamily::Chebyshev2Lowpass;
    s.order = 8;
    s.edges_hz = {8.0};
    s.stopband_attenuation_db = 40.0;
    return s;
}

inline IirFilterSpec ecg_bandpass_spec() {
    IirFilterSpec s;
    s.family = FilterFamily::ButterworthBandpass;
    s.order = 4;
    s.edges_hz = {0.5, 40.0};
    return s;
}

namespace detail {

inline void require_rate_margin(const SampledSignal& raw, double top_edge_hz, const char* op) {
    if (raw.rate.value() < 3.0 * top_edge_hz)
        throw ConfigError(std::string(op) + ": input rate must be at least 3x the filter edge");
}

} // namespace detail

/// Full PPG conditioning chain: 8 Hz chebyshev-II lowpass, resample to the
/// canonical rate, clip at 3 sigma, standardize.
inline SampledSignal preprocess_ppg(const SampledSignal& raw) {
    require_nonempty(raw, "preprocess_ppg");
    const IirFilterSpec spec = ppg_lowpass_spec();
    detail::require_rate_margin(raw, spec.edges_hz[0], "preprocess_ppg");
    const SosCascade sos = design_filter(spec, raw.rate);
    SampledSignal s = filter_apply(raw, sos);
    s = resample(s, canonical_rate());
    s = clip_outliers(s, 3.0);
    return zscore(s);
}

/// ECG conditioning chain: 0.5-40 Hz butterworth bandpass, resample, standardize.
inline SampledSignal preprocess_ecg(const SampledSignal& raw) {
    require_nonempty(raw, "preprocess_ecg");
    const IirFilterSpec spec = ecg_bandpass_spec();
    detail::require_rate_margin(raw, spec.edges_hz[1], "preprocess_ecg");
    const SosCascade sos = design_filter(spec, raw.rate);
    SampledSignal s = filter_apply(raw, sos);
    s = resample(s, canonical_rate());
    return zscore(s);
}

} // namespace somno
