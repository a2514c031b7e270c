#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "somno/errors.hpp"
#include "somno/recording.hpp"
#include "somno/rng.hpp"
#include "somno/sigproc.hpp"

namespace somno {

/// Stage-labeled synthetic PPG: stages walk a Markov chain; the waveform is
/// an amplitude-modulated cardiac oscillation whose frequency, modulation
/// depth and respiratory rate depend on the stage.
struct SynthConfig {
    int n_epochs = 1200;
    std::array<std::array<double, 4>, 4> transition = {{
        {0.60, 0.30, 0.05, 0.05}, // Wake
        {0.05, 0.70, 0.15, 0.10}, // Light
        {0.02, 0.23, 0.70, 0.05}, // Deep
        {0.05, 0.20, 0.05, 0.70}, // REM
    }};
    std::array<double, 4> stage_hr_hz = {1.4, 1.0, 0.75, 1.2};
    std::array<double, 4> stage_amp_var = {0.35, 0.15, 0.05, 0.28};
    std::array<double, 4> stage_resp_hz = {0.35, 0.27, 0.20, 0.31};
    double noise_floor = 0.08;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_epochs < 1) throw ConfigError("synth: n_epochs must be >= 1");
        for (int r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 4; ++c) {
                const double p = transition[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
                if (p < 0.0) throw ConfigError("synth: negative transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw ConfigError("synth: transition row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum) + ", expected 1");
        }
        const double nyquist = canonical_rate().value() / 2.0;
        for (int s = 0; s < 4; ++s) {
            if (stage_hr_hz[static_cast<std::size_t>(s)] <= 0.0 ||
                stage_hr_hz[static_cast<std::size_t>(s)] >= nyquist)
                throw ConfigError("synth: cardiac frequency outside (0, Nyquist)");
            if (stage_resp_hz[static_cast<std::size_t>(s)] <= 0.0 ||
                stage_resp_hz[static_cast<std::size_t>(s)] >= nyquist)
                throw ConfigError("synth: respiratory frequency outside (0, Nyquist)");
            if (stage_amp_var[static_cast<std::size_t>(s)] < 0.0)
                throw ConfigError("synth: amplitude variability must be >= 0");
        }
        if (noise_floor < 0.0) throw ConfigError("synth: noise_floor must be >= 0");
    }
};

namespace detail {

inline int sample_stage(const std::array<double, 4>& row, double u) {
    double acc = 0.0;
    for (int c = 0; c < 4; ++c) {
        acc += row[static_cast<std::size_t>(c)];
        if (u < acc) return c;
    }
    return 3;
}

} // namespace detail

inline Recording generate_synthetic(const SynthConfig& config, const std::string& subject_id) {
    config.validate();
    SeededRng rng(config.seed);

    std::vector<Stage> labels(static_cast<std::size_t>(config.n_epochs));
    int prev = static_cast<int>(Stage::Wake);
    for (int e = 0; e < config.n_epochs; ++e) {
        prev = detail::sample_stage(config.transition[static_cast<std::size_t>(prev)], rng.uniform());
        labels[static_cast<std::size_t>(e)] = static_cast<Stage>(prev);
    }

    const Rational rate = canonical_rate();
    const double dt = 1.0 / rate.value();
    SampledSignal sig;
    sig.rate = rate;
    sig.samples.resize(static_cast<std::size_t>(config.n_epochs) * kSamplesPerEpoch);

    double phase_c = 0.0, phase_r = 0.0;
    std::size_t idx = 0;
    for (int e = 0; e < config.n_epochs; ++e) {
        const auto s = static_cast<std::size_t>(labels[static_cast<std::size_t>(e)]);
        // small per-epoch physiological drift around the stage's frequencies
        const double hr = config.stage_hr_hz[s] * (1.0 + 0.04 * rng.normal());
        const double resp = config.stage_resp_hz[s] * (1.0 + 0.04 * rng.normal());
        const double w_c = 2.0 * M_PI * hr;
        const double w_r = 2.0 * M_PI * resp;
        for (std::int64_t i = 0; i < kSamplesPerEpoch; ++i) {
            phase_c += w_c * dt;
            phase_r += w_r * dt;
            const double amp = 1.0 + config.stage_amp_var[s] * std::sin(phase_r);
            const double pulse = std::sin(phase_c) + 0.35 * std::sin(2.0 * phase_c);
            sig.samples[idx++] = amp * pulse + config.noise_floor * rng.normal();
        }
    }

    // standardized like preprocessed input, then quantized to the storage
    // width so a save/load round trip is bitwise exact
    sig = zscore(sig);
    for (double& v : sig.samples) v = static_cast<double>(static_cast<float>(v));

    Recording rec;
    rec.subject_id = subject_id;
    rec.channels.push_back({"ppg", std::move(sig)});
    rec.labels = std::move(labels);
    return rec;
}

inline Recording generate_synthetic(const SynthConfig& config) {
    return generate_synthetic(config, "synthetic");
}

struct Dataset {
    std::vector<Recording> train, val, test;
};

/// Deterministic disjoint subject counts via largest-remainder rounding;
/// remainder ties resolve train, then val, then test.
inline std::array<int, 3> split_counts(int n_subjects, const std::array<double, 3>& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw ConfigError("split: negative ratio");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split: ratios sum to " + std::to_string(sum) + ", expected 1");
    std::array<int, 3> counts{};
    std::array<double, 3> frac{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = ratios[static_cast<std::size_t>(i)] * n_subjects;
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact + 1e-9));
        frac[static_cast<std::size_t>(i)] = exact - counts[static_cast<std::size_t>(i)];
        assigned += counts[static_cast<std::size_t>(i)];
    }
    for (int left = n_subjects - assigned; left > 0; --left) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (frac[static_cast<std::size_t>(i)] > frac[static_cast<std::size_t>(best)] + 1e-12)
                best = i;
        ++counts[static_cast<std::size_t>(best)];
        frac[static_cast<std::size_t>(best)] = -1.0;
    }
    return counts;
}

inline std::string subject_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%03d", index);
    return buf;
}

inline Dataset make_dataset(int n_subjects, const SynthConfig& proto,
                            const std::array<double, 3>& ratios = {0.72, 0.18, 0.10}) {
    if (n_subjects < 1) throw ConfigError("make_dataset: n_subjects must be >= 1");
    const std::array<int, 3> counts = split_counts(n_subjects, ratios);
    SeededRng master(proto.seed);
    Dataset ds;
    for (int i = 0; i < n_subjects; ++i) {
        SynthConfig cfg = proto;
        cfg.seed = master.fork_seed();
        Recording rec = generate_synthetic(cfg, subject_name(i));
        if (i < counts[0])
            ds.train.push_back(std::move(rec));
        else if (i < counts[0] + counts[1])
            ds.val.push_back(std::move(rec));
        else
            ds.test.push_back(std::move(rec));
    }
    return ds;
}

} // namespace somno
