#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "phvc/eval.hpp"
#include "phvc/rng.hpp"
#include "phvc/train.hpp"

using namespace phvc;

namespace {

F0Contour contour_of(std::initializer_list<double> f0, std::initializer_list<int> voiced) {
    F0Contour c;
    c.f0_hz = f0;
    for (int v : voiced) c.voiced.push_back(std::uint8_t(v));
    return c;
}

Waveform sine(double freq, double dur, double amp, double sr = 22050.0) {
    Waveform y;
    y.sample_rate = sr;
    y.samples.resize(std::size_t(dur * sr));
    for (std::size_t i = 0; i < y.samples.size(); ++i)
        y.samples[i] = amp * std::sin(2.0 * M_PI * freq * double(i) / sr);
    return y;
}

} // namespace

TEST_CASE("f0 rmse over jointly voiced frames") {
    const F0Contour a = contour_of({220.0, 220.0, 220.0}, {1, 1, 1});
    const F0Contour b = contour_of({222.0, 222.0, 222.0}, {1, 1, 1});
    REQUIRE(f0_rmse(a, a).first == 0.0);
    const auto [rmse, n] = f0_rmse(a, b);
    REQUIRE(rmse == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(n == 3);

    // only frame 0 is jointly voiced
    const F0Contour c = contour_of({200.0, 210.0, 0.0}, {1, 1, 0});
    const F0Contour d = contour_of({205.0, 0.0, 215.0}, {1, 0, 1});
    const auto [rmse2, n2] = f0_rmse(c, d);
    REQUIRE(n2 == 1);
    REQUIRE(rmse2 == Catch::Approx(5.0).margin(1e-12));

    const F0Contour e = contour_of({0.0, 100.0}, {0, 1});
    const F0Contour f = contour_of({100.0, 0.0}, {1, 0});
    REQUIRE_THROWS_AS(f0_rmse(e, f), UndefinedMetricError);

    // symmetry
    REQUIRE(f0_rmse(c, d).first == f0_rmse(d, c).first);
}

TEST_CASE("v/uv error rate") {
    const F0Contour a = contour_of({1, 1, 0, 0}, {1, 1, 0, 0});
    const F0Contour b = contour_of({1, 0, 0, 1}, {1, 0, 0, 1});
    REQUIRE(vuv_error(a, a) == 0.0);
    REQUIRE(vuv_error(a, b) == Catch::Approx(50.0));
    const F0Contour flipped = contour_of({0, 0, 1, 1}, {0, 0, 1, 1});
    REQUIRE(vuv_error(a, flipped) == Catch::Approx(100.0));
    REQUIRE(vuv_error(a, b) == vuv_error(b, a));
}

TEST_CASE("mcd closed form on cepstra and gain invariance") {
    // delta on coefficient 1 only
    Matrix c(5, 14), c2(5, 14);
    Rng rng(3);
    for (std::size_t j = 0; j < c.size(); ++j) c.data()[j] = rng.uniform(-1.0, 1.0);
    c2 = c;
    const double delta = 0.37;
    for (std::size_t t = 0; t < 5; ++t) c2(t, 1) += delta;
    const double expected = 10.0 / std::log(10.0) * std::sqrt(2.0) * delta;
    REQUIRE(mcd_from_cepstra(c, c2) == Catch::Approx(expected).margin(1e-9));

    StftConfig cfg;
    Rng noise_rng(5);
    Waveform y;
    y.sample_rate = cfg.sample_rate;
    y.samples.resize(22050);
    for (double& v : y.samples) v = noise_rng.uniform(-0.5, 0.5);
    REQUIRE(mcd(y, y, cfg) == 0.0);

    Waveform scaled = y;
    for (double& v : scaled.samples) v *= 2.0;
    REQUIRE(mcd(y, scaled, cfg) == Catch::Approx(0.0).margin(1e-6));
    REQUIRE(mcd(y, scaled, cfg) == mcd(scaled, y, cfg));
}

TEST_CASE("residual mel energy series") {
    StftConfig cfg;
    const MelFilterbank fb = mel_filterbank(cfg, 80);
    const Waveform y = sine(220.0, 0.5, 0.5);
    const std::vector<double> zero = residual_mel_energy(y, y, cfg, fb);
    REQUIRE(zero.size() == stft_num_frames(y.samples.size(), cfg));
    for (double v : zero) REQUIRE(v == 0.0);

    Waveform silence = y;
    std::fill(silence.samples.begin(), silence.samples.end(), 0.0);
    const std::vector<double> gap = residual_mel_energy(y, silence, cfg, fb);
    for (double v : gap) REQUIRE(v > 0.0);
}

TEST_CASE("griffin-lim fixed point with true phase") {
    StftConfig cfg;
    const Waveform y = sine(220.0, 0.5, 0.5);
    const ComplexSpectrogram S = stft(y, cfg);
    Matrix mag(S.frames(), S.bins());
    for (std::size_t j = 0; j < mag.size(); ++j)
        mag.data()[j] = std::hypot(S.real.data()[j], S.imag.data()[j]);

    const GriffinLimResult res = griffin_lim(mag, cfg, 1, 0, y.samples.size(), &S);
    REQUIRE(res.sc_trace.size() == 1);
    double max_err = 0.0;
    for (std::size_t i = 0; i < y.samples.size(); ++i)
        max_err = std::max(max_err, std::abs(res.waveform.samples[i] - y.samples[i]));
    REQUIRE(max_err < 1e-6);
}

TEST_CASE("griffin-lim zero magnitude and monotone convergence") {
    StftConfig cfg;
    const Matrix zero(20, cfg.bins());
    const GriffinLimResult silent = griffin_lim(zero, cfg, 32, 1);
    REQUIRE(silent.sc_trace.empty());
    for (double v : silent.waveform.samples) REQUIRE(v == 0.0);

    const Waveform y = sine(220.0, 0.4, 0.5);
    const ComplexSpectrogram S = stft(y, cfg);
    Matrix mag(S.frames(), S.bins());
    for (std::size_t j = 0; j < mag.size(); ++j)
        mag.data()[j] = std::hypot(S.real.data()[j], S.imag.data()[j]);
    const GriffinLimResult res = griffin_lim(mag, cfg, 32, 7, y.samples.size());
    REQUIRE(res.sc_trace.size() == 32);
    for (std::size_t i = 1; i < res.sc_trace.size(); ++i)
        REQUIRE(res.sc_trace[i] <= res.sc_trace[i - 1] + 1e-9);

    // deterministic under a fixed seed
    const GriffinLimResult res2 = griffin_lim(mag, cfg, 32, 7, y.samples.size());
    REQUIRE(res.waveform.samples == res2.waveform.samples);
}

TEST_CASE("evaluate_pair on identical signals is all zeros") {
    StftConfig cfg;
    const auto clips = synth_dataset(1, 0.6, 23, cfg);
    const Waveform& y = clips[0].waveform;
    const MetricsReport rep = evaluate_pair(y, y, cfg, PitchConfig{});
    REQUIRE(rep.f0_rmse_hz == 0.0);
    REQUIRE(rep.vuv_error_pct == 0.0);
    REQUIRE(rep.mcd_db == 0.0);
    REQUIRE(rep.n_frames_compared > 0);
    for (double v : rep.residual_mel) REQUIRE(v == 0.0);
    REQUIRE(rep.residual_mel.size() == stft_num_frames(y.samples.size(), cfg));
}

TEST_CASE("griffin-lim anchor is worse than the stft round trip") {
    StftConfig cfg;
    const auto clips = synth_dataset(1, 0.5, 29, cfg);
    const Waveform& y = clips[0].waveform;
    const ComplexSpectrogram S = stft(y, cfg);
    Matrix mag(S.frames(), S.bins());
    for (std::size_t j = 0; j < mag.size(); ++j)
        mag.data()[j] = std::hypot(S.real.data()[j], S.imag.data()[j]);

    const Waveform round_trip = istft(S, y.samples.size());
    const Waveform anchor = griffin_lim(mag, cfg, 32, 3, y.samples.size()).waveform;
    const double mcd_round = mcd(y, round_trip, cfg);
    const double mcd_anchor = mcd(y, anchor, cfg);
    INFO("round trip mcd " << mcd_round << ", anchor mcd " << mcd_anchor);
    REQUIRE(mcd_anchor > mcd_round);
}
