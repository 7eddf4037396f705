#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "phvc/pitch.hpp"
#include "phvc/rng.hpp"

using namespace phvc;

namespace {

Waveform sine(double freq, double dur, double amp, double sr = 22050.0) {
    Waveform y;
    y.sample_rate = sr;
    y.samples.resize(std::size_t(dur * sr));
    for (std::size_t i = 0; i < y.samples.size(); ++i)
        y.samples[i] = amp * std::sin(2.0 * M_PI * freq * double(i) / sr);
    return y;
}

Waveform harmonic(double f0, double dur, std::size_t n_harm, double amp, double sr = 22050.0) {
    Waveform y;
    y.sample_rate = sr;
    y.samples.resize(std::size_t(dur * sr));
    double h_sum = 0.0;
    for (std::size_t k = 1; k <= n_harm; ++k) h_sum += 1.0 / double(k);
    for (std::size_t i = 0; i < y.samples.size(); ++i) {
        const double t = double(i) / sr;
        double v = 0.0;
        for (std::size_t k = 1; k <= n_harm; ++k)
            v += amp / (double(k) * h_sum) * std::sin(2.0 * M_PI * double(k) * f0 * t);
        y.samples[i] = v;
    }
    return y;
}

double median_abs_err(const F0Contour& c, double truth) {
    std::vector<double> errs;
    for (std::size_t t = 0; t < c.size(); ++t)
        if (c.voiced[t]) errs.push_back(std::abs(c.f0_hz[t] - truth));
    REQUIRE(!errs.empty());
    std::sort(errs.begin(), errs.end());
    return errs[errs.size() / 2];
}

} // namespace

TEST_CASE("pure sine is tracked within 3 Hz") {
    const StftConfig cfg;
    const PitchConfig pcfg;
    const Waveform y = sine(220.0, 0.5, 0.5);
    const F0Contour c = estimate_f0(y, cfg, pcfg);
    REQUIRE(c.size() == stft_num_frames(y.samples.size(), cfg));

    std::size_t voiced = 0;
    for (std::size_t t = 0; t < c.size(); ++t) voiced += c.voiced[t];
    REQUIRE(double(voiced) >= 0.9 * double(c.size()));
    REQUIRE(median_abs_err(c, 220.0) <= 3.0);
}

TEST_CASE("digital silence is fully unvoiced") {
    const StftConfig cfg;
    Waveform y;
    y.samples.assign(11025, 0.0);
    const F0Contour c = estimate_f0(y, cfg, PitchConfig{});
    for (std::size_t t = 0; t < c.size(); ++t) {
        REQUIRE(c.voiced[t] == 0);
        REQUIRE(c.f0_hz[t] == 0.0);
    }
}

TEST_CASE("white noise is mostly unvoiced") {
    const StftConfig cfg;
    Rng rng(7);
    Waveform y;
    y.sample_rate = cfg.sample_rate;
    y.samples.resize(11025);
    for (double& v : y.samples) v = rng.uniform(-0.3, 0.3);
    const F0Contour c = estimate_f0(y, cfg, PitchConfig{});
    std::size_t unvoiced = 0;
    for (std::size_t t = 0; t < c.size(); ++t) unvoiced += c.voiced[t] == 0;
    REQUIRE(double(unvoiced) >= 0.8 * double(c.size()));
}

TEST_CASE("f0_features mapping") {
    PitchConfig pcfg; // floor 60, ceil 500
    F0Contour c;
    c.f0_hz = {0.0, 60.0, 240.0, 500.0};
    c.voiced = {0, 1, 1, 1};
    const Matrix f = f0_features(c, pcfg);
    REQUIRE(f.rows() == 4);
    REQUIRE(f.cols() == 2);
    REQUIRE(f(0, 0) == 0.0);
    REQUIRE(f(0, 1) == 0.0);
    REQUIRE(f(1, 0) == 1.0);
    REQUIRE(f(1, 1) == Catch::Approx(0.0).margin(1e-12));
    const double expected = std::log2(240.0 / 60.0) / std::log2(500.0 / 60.0);
    REQUIRE(f(2, 1) == Catch::Approx(expected).margin(1e-12));
    REQUIRE(f(3, 1) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("amplitude invariance of voicing and f0") {
    const StftConfig cfg;
    const PitchConfig pcfg;
    const Waveform base = harmonic(180.0, 0.4, 5, 0.5);
    const F0Contour ref = estimate_f0(base, cfg, pcfg);
    for (double g : {0.1, 0.35, 1.0}) {
        Waveform scaled = base;
        for (double& v : scaled.samples) v *= g;
        const F0Contour c = estimate_f0(scaled, cfg, pcfg);
        for (std::size_t t = 0; t < c.size(); ++t) {
            REQUIRE(c.voiced[t] == ref.voiced[t]);
            if (c.voiced[t]) REQUIRE(std::abs(c.f0_hz[t] - ref.f0_hz[t]) <= 0.1);
        }
    }
}

TEST_CASE("harmonic signals avoid octave errors") {
    const StftConfig cfg;
    const PitchConfig pcfg;
    for (double f0 : {90.0, 150.0, 280.0, 380.0}) {
        const Waveform y = harmonic(f0, 0.5, 4, 0.4);
        const F0Contour c = estimate_f0(y, cfg, pcfg);
        std::size_t voiced = 0, outside = 0;
        for (std::size_t t = 0; t < c.size(); ++t) {
            if (!c.voiced[t]) continue;
            ++voiced;
            if (c.f0_hz[t] < 0.9 * f0 || c.f0_hz[t] > 1.1 * f0) ++outside;
        }
        REQUIRE(voiced > 0);
        REQUIRE(double(outside) < 0.1 * double(voiced));
    }
}

TEST_CASE("estimate_f0 is deterministic and validates inputs") {
    const StftConfig cfg;
    const PitchConfig pcfg;
    const Waveform y = sine(150.0, 0.3, 0.4);
    const F0Contour a = estimate_f0(y, cfg, pcfg);
    const F0Contour b = estimate_f0(y, cfg, pcfg);
    REQUIRE(a.f0_hz == b.f0_hz);
    REQUIRE(a.voiced == b.voiced);

    Waveform tiny;
    tiny.samples.assign(1000, 0.1); // shorter than frame_window
    REQUIRE_THROWS_AS(estimate_f0(tiny, cfg, pcfg), std::invalid_argument);

    Waveform wrong = y;
    wrong.sample_rate = 16000.0;
    REQUIRE_THROWS_AS(estimate_f0(wrong, cfg, pcfg), std::invalid_argument);
}

TEST_CASE("contour csv round trip") {
    namespace fs = std::filesystem;
    F0Contour c;
    c.f0_hz = {0.0, 123.456789, 0.0, 432.1};
    c.voiced = {0, 1, 0, 1};
    c.hop = 256;
    c.sample_rate = 22050.0;
    const fs::path path = fs::temp_directory_path() / "phvc_contour.csv";
    write_f0_csv(path.string(), c);
    const F0Contour back = read_f0_csv(path.string(), c.hop, c.sample_rate);
    REQUIRE(back.f0_hz == c.f0_hz);
    REQUIRE(back.voiced == c.voiced);
    fs::remove(path);
}
