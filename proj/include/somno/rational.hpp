#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "somno/errors.hpp"

namespace somno {

/// Exact rational number with positive numerator/denominator, kept reduced.
/// Used for sample rates so ratios like 256 -> 1024/30 Hz stay exact.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
        if (num <= 0 || den <= 0)
            throw ConfigError("rational rate must have positive numerator and denominator");
        const std::int64_t g = std::gcd(num, den);
        num /= g;
        den /= g;
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

} // namespace somno
