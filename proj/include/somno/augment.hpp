#pragma once

#include <cmath>
#include <cstdint>

#include "somno/errors.hpp"
#include "somno/rng.hpp"
#include "somno/signal.hpp"

namespace somno {

struct AugmentParams {
    double noise_sigma = 0.1;
    double drift_amplitude = 0.1;
    double drift_freq_hz = 0.1;
    double spike_prob = 0.01;
    double spike_amplitude = 0.5;
    std::uint64_t seed = 0;

    void validate(const Rational& rate) const {
        if (!(noise_sigma >= 0.0)) throw ConfigError("augment: noise_sigma must be >= 0");
        if (!(spike_prob >= 0.0 && spike_prob <= 1.0))
            throw ConfigError("augment: spike_prob must be in [0, 1]");
        if (!(drift_amplitude >= 0.0)) throw ConfigError("augment: drift_amplitude must be >= 0");
        if (!(spike_amplitude >= 0.0)) throw ConfigError("augment: spike_amplitude must be >= 0");
        if (!(drift_freq_hz >= 0.0) || drift_freq_hz >= rate.value() / 2.0)
            throw ConfigError("augment: drift_freq must be in [0, Nyquist)");
    }
};

/// Additive augmentation: Gaussian noise + sinusoidal baseline drift (random
/// phase, drawn once per call) + sparse symmetric spikes. The RNG consumes the
/// same draws regardless of parameter values, so zeroing one parameter removes
/// exactly that component and leaves the others bitwise unchanged.
inline SampledSignal augment_ppg(const SampledSignal& input, const AugmentParams& params) {
    require_nonempty(input, "augment_ppg");
    require_finite(input, "augment_ppg");
    params.validate(input.rate);

    SeededRng rng(params.seed);
    const double phase = 2.0 * M_PI * rng.uniform();
    const double dt = 1.0 / input.rate.value();
    const double w = 2.0 * M_PI * params.drift_freq_hz;

    SampledSignal out = input;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const double g = rng.normal();
        const double u_spike = rng.uniform();
        const double u_sign = rng.uniform();
        double v = out.samples[i];
        v += params.noise_sigma * g;
        v += params.drift_amplitude * std::sin(w * static_cast<double>(i) * dt + phase);
        if (u_spike < params.spike_prob)
            v += (u_sign < 0.5 ? params.spike_amplitude : -params.spike_amplitude);
        out.samples[i] = v;
    }
    return out;
}

} // namespace somno
