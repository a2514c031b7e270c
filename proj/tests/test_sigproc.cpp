#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <somno/iir.hpp>
#include <somno/resample.hpp>
#include <somno/sigproc.hpp>

#include "helpers.hpp"

using namespace somno;
using Catch::Approx;

namespace {

SampledSignal sine(double freq_hz, double seconds, const Rational& rate, double amp = 1.0) {
    const std::int64_t n = static_cast<std::int64_t>(seconds * rate.value());
    SampledSignal s;
    s.rate = rate;
    s.samples.resize(static_cast<std::size_t>(n));
    const double w = 2.0 * M_PI * freq_hz / rate.value();
    for (std::int64_t i = 0; i < n; ++i)
        s.samples[static_cast<std::size_t>(i)] = amp * std::sin(w * static_cast<double>(i));
    return s;
}

SampledSignal random_signal(std::int64_t n, const Rational& rate, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    SampledSignal s;
    s.rate = rate;
    s.samples.resize(static_cast<std::size_t>(n));
    for (auto& v : s.samples) v = dist(gen);
    return s;
}

} // namespace

TEST_CASE("chebyshev-II lowpass matches reference magnitudes") {
    const SosCascade sos = design_filter(ppg_lowpass_spec(), Rational{256, 1});

    // reference |H| for this design (order 8, stopband edge 8 Hz, 40 dB)
    const double freqs[] = {2.0, 8.0, 12.0, 20.0, 40.0};
    const double mags[] = {0.999999999913, 0.010000000000, 0.008896646359, 0.009958373149,
                           0.000880987473};
    for (int i = 0; i < 5; ++i)
        REQUIRE(testutil::cascade_gain(sos, freqs[i], 256.0) == Approx(mags[i]).margin(1e-7));

    SECTION("stopband holds at and beyond 1.5x the edge") {
        for (double f = 12.0; f < 128.0; f += 7.3)
            REQUIRE(testutil::cascade_gain(sos, f, 256.0) <= 0.01 + 1e-9);
    }
}

TEST_CASE("butterworth bandpass sits at -3 dB on both edges") {
    const SosCascade sos = design_filter(ecg_bandpass_spec(), Rational{256, 1});
    const double lo = testutil::cascade_gain(sos, 0.5, 256.0);
    const double hi = testutil::cascade_gain(sos, 40.0, 256.0);
    REQUIRE(lo == Approx(0.707106781187).margin(1e-6));
    REQUIRE(hi == Approx(0.707106781187).margin(1e-6));
    REQUIRE(testutil::cascade_gain(sos, 5.0, 256.0) == Approx(1.0).margin(1e-9));
}

TEST_CASE("filter design rejects invalid specs") {
    IirFilterSpec bad = ppg_lowpass_spec();
    bad.edges_hz = {200.0}; // past Nyquist at 256 Hz
    REQUIRE_THROWS_AS(design_filter(bad, Rational{256, 1}), ConfigError);

    IirFilterSpec zero_order = ppg_lowpass_spec();
    zero_order.order = 0;
    REQUIRE_THROWS_AS(design_filter(zero_order, Rational{256, 1}), ConfigError);

    IirFilterSpec swapped = ecg_bandpass_spec();
    swapped.edges_hz = {40.0, 0.5};
    REQUIRE_THROWS_AS(design_filter(swapped, Rational{256, 1}), ConfigError);
}

TEST_CASE("filter_apply behavior") {
    const Rational fs{256, 1};
    const SosCascade sos = design_filter(ppg_lowpass_spec(), fs);

    SECTION("all-zero input stays zero") {
        SampledSignal z{std::vector<double>(5000, 0.0), fs};
        const SampledSignal y = filter_apply(z, sos);
        REQUIRE(y.size() == z.size());
        for (double v : y.samples) REQUIRE(v == 0.0);
    }

    SECTION("passband sine keeps its amplitude") {
        const SampledSignal y = filter_apply(sine(2.0, 30.0, fs), sos);
        const double amp =
            testutil::sine_amplitude(y.samples, 2.0, 256.0, 512, y.samples.size());
        REQUIRE(amp == Approx(0.999999999913).epsilon(0.02));
    }

    SECTION("stopband sine is crushed") {
        const SampledSignal y = filter_apply(sine(20.0, 30.0, fs), sos);
        const double amp =
            testutil::sine_amplitude(y.samples, 20.0, 256.0, 512, y.samples.size());
        REQUIRE(amp <= 0.01);
    }

    SECTION("linearity") {
        const SampledSignal x = random_signal(512, fs, 11);
        const SampledSignal y = random_signal(512, fs, 22);
        SampledSignal mix{std::vector<double>(512), fs};
        for (std::size_t i = 0; i < 512; ++i)
            mix.samples[i] = 1.7 * x.samples[i] - 0.6 * y.samples[i];
        const auto fx = filter_apply(x, sos), fy = filter_apply(y, sos),
                   fm = filter_apply(mix, sos);
        for (std::size_t i = 0; i < 512; ++i)
            REQUIRE(fm.samples[i] ==
                    Approx(1.7 * fx.samples[i] - 0.6 * fy.samples[i]).margin(1e-9));
    }

    SECTION("non-finite input rejected") {
        SampledSignal bad{std::vector<double>(16, 0.0), fs};
        bad.samples[7] = std::nan("");
        REQUIRE_THROWS_AS(filter_apply(bad, sos), DataError);
    }
}

TEST_CASE("resample length arithmetic and spectra") {
    const Rational fs256{256, 1};
    const Rational target = canonical_rate();

    SECTION("full-night sample count") {
        SampledSignal x{std::vector<double>(9216000, 0.5), fs256};
        const SampledSignal y = resample(x, target);
        REQUIRE(y.size() == 1228800);
        REQUIRE(y.rate == target);
        for (std::size_t i = 0; i < y.samples.size(); i += 9973)
            REQUIRE(y.samples[i] == Approx(0.5).margin(1e-6));
    }

    SECTION("constant stays constant everywhere") {
        SampledSignal x{std::vector<double>(4096, 3.25), fs256};
        const SampledSignal y = resample(x, target);
        for (double v : y.samples) REQUIRE(v == Approx(3.25).margin(1e-6));
    }

    SECTION("1 Hz sine survives with correct frequency and amplitude") {
        const SampledSignal y = resample(sine(1.0, 60.0, fs256), target);
        REQUIRE(y.size() == 2048); // 60 s * 1024/30
        // bin width = (1024/30)/2048 Hz, so 1 Hz lands exactly on bin 60
        REQUIRE(testutil::dominant_bin(y.samples, 2048) == 60);
        const double amp = testutil::sine_amplitude(y.samples, 1.0, 1024.0 / 30.0, 128,
                                                    y.samples.size() - 128);
        REQUIRE(amp == Approx(1.0).epsilon(0.01));
    }

    SECTION("identity resample is bitwise") {
        const SampledSignal x = random_signal(500, fs256, 3);
        const SampledSignal y = resample(x, Rational{512, 2});
        REQUIRE(y.samples == x.samples);
    }

    SECTION("length formula on random rational ratios") {
        std::mt19937 gen(77);
        std::uniform_int_distribution<std::int64_t> nd(1, 4000), num(1, 64), den(1, 8);
        for (int trial = 0; trial < 200; ++trial) {
            const std::int64_t n_in = nd(gen);
            const Rational in_rate{num(gen), den(gen)};
            const Rational out_rate{num(gen), den(gen)};
            const __int128 expect = static_cast<__int128>(n_in) * out_rate.num * in_rate.den /
                                    (static_cast<__int128>(out_rate.den) * in_rate.num);
            SampledSignal x{std::vector<double>(static_cast<std::size_t>(n_in), 1.0), in_rate};
            if (expect < 1) {
                REQUIRE_THROWS_AS(resample(x, out_rate), DataError);
                continue;
            }
            const SampledSignal y = resample(x, out_rate);
            REQUIRE(y.size() == static_cast<std::int64_t>(expect));
            for (double v : y.samples) REQUIRE(v == Approx(1.0).margin(1e-6));
        }
    }

    SECTION("empty input rejected") {
        SampledSignal empty{{}, fs256};
        REQUIRE_THROWS_AS(resample(empty, target), DataError);
    }
}

TEST_CASE("clip_outliers clamps to k-sigma bounds of the input") {
    const Rational fs{64, 1};

    SECTION("in-range signal unchanged") {
        const SampledSignal x = random_signal(1000, fs, 5);
        const SampledSignal y = clip_outliers(x, 10.0);
        REQUIRE(y.samples == x.samples);
    }

    SECTION("single spike clamped to the original mu + 3 sigma") {
        std::vector<double> v(1000, 0.0);
        v.back() = 100.0;
        double sum = 0.0, sq = 0.0;
        for (double s : v) sum += s, sq += s * s;
        const double mu = sum / 1000.0;
        const double sigma = std::sqrt(sq / 1000.0 - mu * mu);
        const SampledSignal y = clip_outliers(SampledSignal{v, fs}, 3.0);
        REQUIRE(y.samples.back() == Approx(mu + 3.0 * sigma).margin(1e-12));
        for (std::size_t i = 0; i + 1 < y.samples.size(); ++i) REQUIRE(y.samples[i] == 0.0);
    }

    SECTION("constant signal unchanged") {
        const SampledSignal y = clip_outliers(SampledSignal{std::vector<double>(64, 2.5), fs}, 3.0);
        for (double v : y.samples) REQUIRE(v == 2.5);
    }

    SECTION("range bound and monotonicity in k") {
        const SampledSignal x = random_signal(2000, fs, 9);
        double mu, sigma;
        signal_moments(x, mu, sigma);
        const SampledSignal y1 = clip_outliers(x, 1.0);
        const SampledSignal y2 = clip_outliers(x, 2.0);
        for (std::size_t i = 0; i < x.samples.size(); ++i) {
            REQUIRE(y1.samples[i] >= mu - 1.0 * sigma - 1e-12);
            REQUIRE(y1.samples[i] <= mu + 1.0 * sigma + 1e-12);
            if (y1.samples[i] == x.samples[i]) REQUIRE(y2.samples[i] == x.samples[i]);
        }
    }

    SECTION("k must be positive") {
        const SampledSignal x = random_signal(10, fs, 1);
        REQUIRE_THROWS_AS(clip_outliers(x, 0.0), ConfigError);
        REQUIRE_THROWS_AS(clip_outliers(x, -1.0), ConfigError);
    }
}

TEST_CASE("zscore normalizes to zero mean, unit variance") {
    const Rational fs{64, 1};

    SECTION("three-point example") {
        const SampledSignal y = zscore(SampledSignal{{1.0, 2.0, 3.0}, fs});
        const double r = std::sqrt(1.5);
        REQUIRE(y.samples[0] == Approx(-r).margin(1e-12));
        REQUIRE(y.samples[1] == Approx(0.0).margin(1e-12));
        REQUIRE(y.samples[2] == Approx(r).margin(1e-12));
    }

    SECTION("moments and idempotence") {
        const SampledSignal y = zscore(random_signal(5000, fs, 13));
        double mu, sigma;
        signal_moments(y, mu, sigma);
        REQUIRE(mu == Approx(0.0).margin(1e-9));
        REQUIRE(sigma == Approx(1.0).margin(1e-9));
        const SampledSignal y2 = zscore(y);
        for (std::size_t i = 0; i < y.samples.size(); ++i)
            REQUIRE(y2.samples[i] == Approx(y.samples[i]).margin(1e-9));
    }

    SECTION("constant collapses to zeros") {
        const SampledSignal y = zscore(SampledSignal{std::vector<double>(100, 7.0), fs});
        for (double v : y.samples) REQUIRE(v == 0.0);
    }
}

TEST_CASE("preprocess_ppg pipeline") {
    const Rational fs256{256, 1};

    SECTION("10-hour zeros give 1,228,800 zeros, 1200 whole epochs") {
        SampledSignal x{std::vector<double>(9216000, 0.0), fs256};
        const SampledSignal y = preprocess_ppg(x);
        REQUIRE(y.size() == 1228800);
        REQUIRE(y.size() % kSamplesPerEpoch == 0);
        REQUIRE(y.size() / kSamplesPerEpoch == 1200);
        for (std::size_t i = 0; i < y.samples.size(); i += 7919) REQUIRE(y.samples[i] == 0.0);
    }

    SECTION("moments after the pipeline") {
        const SampledSignal y = preprocess_ppg(random_signal(256 * 60 * 30, fs256, 21));
        double mu, sigma;
        signal_moments(y, mu, sigma);
        REQUIRE(mu == Approx(0.0).margin(1e-9));
        REQUIRE(sigma == Approx(1.0).margin(1e-9));
    }

    SECTION("rate below 3x the lowpass edge rejected") {
        REQUIRE_THROWS_AS(preprocess_ppg(random_signal(1000, Rational{20, 1}, 2)), ConfigError);
    }
}

TEST_CASE("preprocess_ecg pipeline") {
    const Rational fs256{256, 1};

    SECTION("zeros map to zeros") {
        SampledSignal x{std::vector<double>(256 * 600, 0.0), fs256};
        const SampledSignal y = preprocess_ecg(x);
        REQUIRE(y.size() == 600 * 1024 / 30);
        for (double v : y.samples) REQUIRE(v == 0.0);
    }

    SECTION("5 Hz sine passes at its analytic gain") {
        const double target_rate = 1024.0 / 30.0;
        const SosCascade sos = design_filter(ecg_bandpass_spec(), fs256);
        const SampledSignal mid = resample(filter_apply(sine(5.0, 600.0, fs256), sos),
                                           canonical_rate());
        const double raw_amp = testutil::sine_amplitude(mid.samples, 5.0, target_rate, 512,
                                                        mid.samples.size() - 512);
        REQUIRE(raw_amp == Approx(1.0).epsilon(0.03)); // |H(5 Hz)| = 1.0

        // the full pipeline then zscores a pure sine to amplitude sqrt(2)
        const SampledSignal y = preprocess_ecg(sine(5.0, 600.0, fs256));
        const double amp = testutil::sine_amplitude(y.samples, 5.0, target_rate, 512,
                                                    y.samples.size() - 512);
        REQUIRE(amp == Approx(std::sqrt(2.0)).epsilon(0.03));
    }

    SECTION("moments") {
        const SampledSignal y = preprocess_ecg(random_signal(256 * 60 * 10, fs256, 4));
        double mu, sigma;
        signal_moments(y, mu, sigma);
        REQUIRE(mu == Approx(0.0).margin(1e-9));
        REQUIRE(sigma == Approx(1.0).margin(1e-9));
    }
}
