#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "somno/errors.hpp"
#include "somno/rational.hpp"

namespace somno {

/// A uniformly sampled real-valued signal with an exact rational rate in Hz.
struct SampledSignal {
    std::vector<double> samples;
    Rational rate{1, 1};

    SampledSignal() = default;
    SampledSignal(std::vector<double> s, Rational r) : samples(std::move(s)), rate(r) {}

    std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
    bool empty() const { return samples.empty(); }
    double nyquist_hz() const { return 0.5 * rate.value(); }
    double duration_s() const { return static_cast<double>(size()) / rate.value(); }
};

inline void require_finite(const SampledSignal& sig, const char* where) {
    for (std::size_t i = 0; i < sig.samples.size(); ++i) {
        if (!std::isfinite(sig.samples[i]))
            throw DataError(std::string(where) + ": non-finite sample at index " +
                            std::to_string(i));
    }
}

inline void require_nonempty(const SampledSignal& sig, const char* where) {
    if (sig.empty()) throw DataError(std::string(where) + ": empty signal");
}

} // namespace somno
