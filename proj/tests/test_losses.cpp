#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "phvc/losses.hpp"
#include "phvc/rng.hpp"

using namespace phvc;

namespace {

StftConfig small_cfg() {
    StftConfig cfg;
    cfg.fft_size = cfg.win_size = 64;
    cfg.hop = 16;
    return cfg;
}

ComplexSpectrogram random_spec(std::size_t frames, const StftConfig& cfg, std::uint64_t seed,
                               double lo = 0.2, double hi = 2.0) {
    Rng rng(seed);
    ComplexSpectrogram S{Matrix(frames, cfg.bins()), Matrix(frames, cfg.bins()), cfg};
    for (std::size_t j = 0; j < S.real.size(); ++j) {
        const double mag = rng.uniform(lo, hi);
        const double phi = rng.uniform(-M_PI, M_PI);
        S.real.data()[j] = mag * std::cos(phi);
        S.imag.data()[j] = mag * std::sin(phi);
    }
    return S;
}

Waveform random_wave(std::size_t n, std::uint64_t seed, double amp = 0.6) {
    Rng rng(seed);
    Waveform y;
    y.samples.resize(n);
    for (double& v : y.samples) v = rng.uniform(-amp, amp);
    return y;
}

// brute-force MR-STFT evaluation: reflect pad, frame, window, naive DFT
double mr_stft_oracle(const Waveform& y_hat, const Waveform& y, const MrStftConfig& cfg) {
    double total = 0.0;
    for (std::size_t ri = 0; ri < cfg.resolutions.size(); ++ri) {
        const auto [fft_n, hop, win] = cfg.resolutions[ri];
        auto mags = [&](const std::vector<double>& x) {
            const std::size_t pad = win / 2;
            std::vector<double> padded(x.size() + 2 * pad);
            for (std::size_t i = 0; i < padded.size(); ++i) {
                long long s = (long long)i - (long long)pad;
                const long long period = 2 * ((long long)x.size() - 1);
                s %= period;
                if (s < 0) s += period;
                if (s >= (long long)x.size()) s = period - s;
                padded[i] = x[s];
            }
            const std::size_t frames = x.size() / hop + 1;
            std::vector<std::vector<double>> m(frames, std::vector<double>(fft_n / 2 + 1));
            for (std::size_t t = 0; t < frames; ++t)
                for (std::size_t f = 0; f <= fft_n / 2; ++f) {
                    std::complex<double> acc = 0.0;
                    for (std::size_t k = 0; k < win; ++k) {
                        const double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * k / double(win)));
                        const double th = -2.0 * M_PI * double(f) * double(k) / double(fft_n);
                        acc += padded[t * hop + k] * w * std::complex<double>(std::cos(th), std::sin(th));
                    }
                    m[t][f] = std::abs(acc);
                }
            return m;
        };
        const auto mr = mags(y.samples), mh = mags(y_hat.samples);
        double diff = 0.0, norm = 0.0, logl1 = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < mr.size(); ++t)
            for (std::size_t f = 0; f < mr[t].size(); ++f) {
                diff += (mr[t][f] - mh[t][f]) * (mr[t][f] - mh[t][f]);
                norm += mr[t][f] * mr[t][f];
                logl1 += std::abs(std::log(mr[t][f] + 1e-5) - std::log(mh[t][f] + 1e-5));
                ++count;
            }
        total += std::sqrt(diff) / std::sqrt(norm) + logl1 / double(count);
    }
    return total / double(cfg.resolutions.size());
}

} // namespace

TEST_CASE("phase loss analytic geometry") {
    const StftConfig cfg = small_cfg();
    const ComplexSpectrogram S = random_spec(7, cfg, 3, 0.2, 2.0);

    REQUIRE(phase_loss(S, S).value == Catch::Approx(0.0).margin(1e-15));
    for (double c : {0.5, 2.0, 10.0}) {
        ComplexSpectrogram Sc = S;
        for (std::size_t j = 0; j < Sc.real.size(); ++j) {
            Sc.real.data()[j] *= c;
            Sc.imag.data()[j] *= c;
        }
        REQUIRE(phase_loss(Sc, S).value == Catch::Approx(0.0).margin(1e-12));
    }

    ComplexSpectrogram neg = S;
    for (std::size_t j = 0; j < neg.real.size(); ++j) {
        neg.real.data()[j] = -neg.real.data()[j];
        neg.imag.data()[j] = -neg.imag.data()[j];
    }
    REQUIRE(phase_loss(neg, S).value == Catch::Approx(4.0).margin(1e-9));

    ComplexSpectrogram rot = S; // multiply by j: (re, im) -> (-im, re)
    for (std::size_t j = 0; j < rot.real.size(); ++j) {
        const double re = S.real.data()[j], im = S.imag.data()[j];
        rot.real.data()[j] = -im;
        rot.imag.data()[j] = re;
    }
    REQUIRE(phase_loss(rot, S).value == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("phase loss is symmetric, bounded, and masks silent bins") {
    const StftConfig cfg = small_cfg();
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const ComplexSpectrogram A = random_spec(4, cfg, 100 + rep, 0.0, 1.5);
        const ComplexSpectrogram B = random_spec(4, cfg, 200 + rep, 0.0, 1.5);
        const double ab = phase_loss(A, B).value;
        const double ba = phase_loss(B, A).value;
        REQUIRE(ab >= 0.0);
        REQUIRE(ab <= 4.0);
        REQUIRE(ab == Catch::Approx(ba).margin(1e-12));
    }

    // a bin below the mask threshold contributes nothing, denominator stays T*F
    ComplexSpectrogram S = random_spec(2, cfg, 7, 0.5, 1.0);
    ComplexSpectrogram H = S;
    const double full = phase_loss(H, S).value;
    REQUIRE(full == Catch::Approx(0.0).margin(1e-15));
    H.real(0, 0) = 1e-9; // below 1e-6: masked
    H.imag(0, 0) = 0.0;
    REQUIRE(phase_loss(H, S).value == Catch::Approx(0.0).margin(1e-15));

    // scale invariance of either argument
    const ComplexSpectrogram A = random_spec(3, cfg, 8, 0.3, 1.2);
    const ComplexSpectrogram B = random_spec(3, cfg, 9, 0.3, 1.2);
    const double base = phase_loss(A, B).value;
    ComplexSpectrogram A2 = A;
    for (std::size_t j = 0; j < A2.real.size(); ++j) {
        A2.real.data()[j] *= 7.5;
        A2.imag.data()[j] *= 7.5;
    }
    REQUIRE(phase_loss(A2, B).value == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("phase loss gradient matches finite differences") {
    const StftConfig cfg = small_cfg();
    const ComplexSpectrogram S = random_spec(3, cfg, 11, 0.3, 1.5);
    ComplexSpectrogram H = random_spec(3, cfg, 12, 0.3, 1.5);
    const PhaseLossResult base = phase_loss(H, S);

    Rng rng(13);
    const double eps = 1e-6;
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t j = rng.below(H.real.size());
        const bool re = rng.below(2) == 0;
        double& slot = re ? H.real.data()[j] : H.imag.data()[j];
        const double saved = slot;
        slot = saved + eps;
        const double lp = phase_loss(H, S).value;
        slot = saved - eps;
        const double lm = phase_loss(H, S).value;
        slot = saved;
        const double gn = (lp - lm) / (2.0 * eps);
        const double ga = re ? base.d_real.data()[j] : base.d_imag.data()[j];
        REQUIRE(ga == Catch::Approx(gn).margin(1e-6 * std::max(1.0, std::abs(gn))));
    }
}

TEST_CASE("mr-stft loss values") {
    MrStftConfig cfg;
    cfg.resolutions = {{256, 64, 256}, {128, 32, 128}};
    const Waveform y = random_wave(1024, 17);

    REQUIRE(mr_stft_loss(y, y, cfg).value == 0.0);

    Waveform zero = y;
    std::fill(zero.samples.begin(), zero.samples.end(), 0.0);
    const MrStftResult z = mr_stft_loss(zero, y, cfg);
    REQUIRE(z.sc == Catch::Approx(1.0).margin(1e-12)); // exactly ||S||/||S|| per resolution
    REQUIRE(z.value > 1.0);

    REQUIRE_THROWS_AS(mr_stft_loss(y, zero, cfg), DegenerateReferenceError);

    Waveform doubled = y;
    for (double& v : doubled.samples) v *= 2.0;
    const double oracle = mr_stft_oracle(doubled, y, cfg);
    REQUIRE(mr_stft_loss(doubled, y, cfg).value == Catch::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("mr-stft gradient matches finite differences") {
    MrStftConfig cfg;
    cfg.resolutions = {{64, 16, 64}, {32, 8, 32}};
    const Waveform y = random_wave(300, 19);
    Waveform h = random_wave(300, 23);
    const MrStftResult base = mr_stft_loss(h, y, cfg);

    Rng rng(29);
    const double eps = 1e-6;
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t j = rng.below(h.samples.size());
        const double saved = h.samples[j];
        h.samples[j] = saved + eps;
        const double lp = mr_stft_loss(h, y, cfg).value;
        h.samples[j] = saved - eps;
        const double lm = mr_stft_loss(h, y, cfg).value;
        h.samples[j] = saved;
        const double gn = (lp - lm) / (2.0 * eps);
        REQUIRE(base.dy[j] == Catch::Approx(gn).margin(2e-5 * std::max(1.0, std::abs(gn))));
    }
}

TEST_CASE("discriminator shapes, zero params, determinism") {
    const std::vector<double> window = random_wave(1024, 31).samples;

    ParamSet zero = init_disc_params(1);
    for (Tensor& t : zero.tensors()) std::fill(t.value.begin(), t.value.end(), 0.0);
    const std::vector<double> s0 = disc_forward(window, zero);
    for (double v : s0) REQUIRE(v == 0.0);

    ParamSet p = init_disc_params(2);
    DiscRecord rec;
    const std::vector<double> s1 = disc_forward(window, p, &rec);
    const std::vector<double> s2 = disc_forward(window, p);
    REQUIRE(s1 == s2);

    // pooled scale sees half the steps of the raw scale
    REQUIRE(rec.score_offset.size() == 2);
    const std::size_t raw_steps = rec.score_offset[1];
    const std::size_t pooled_steps = s1.size() - raw_steps;
    REQUIRE(pooled_steps * 2 == raw_steps);

    std::vector<double> tiny(100, 0.0);
    REQUIRE_THROWS_AS(disc_forward(tiny, p), std::invalid_argument);
}

TEST_CASE("discriminator backward matches finite differences") {
    const std::vector<double> window = random_wave(512, 37).samples;
    ParamSet p = init_disc_params(3);
    DiscRecord rec;
    const std::vector<double> scores = disc_forward(window, p, &rec);
    // L = mean((s-1)^2)
    std::vector<double> ds(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j)
        ds[j] = 2.0 * (scores[j] - 1.0) / double(scores.size());
    auto loss_of = [&](const std::vector<double>& win, const ParamSet& params) {
        const std::vector<double> s = disc_forward(win, params);
        double acc = 0.0;
        for (double v : s) acc += (v - 1.0) * (v - 1.0);
        return acc / double(s.size());
    };

    p.zero_grads();
    std::vector<double> d_win = disc_backward(rec, ds, p, /*accum_params=*/true);

    Rng rng(41);
    const double eps = 1e-6;
    // input gradient
    std::vector<double> w2 = window;
    for (int rep = 0; rep < 15; ++rep) {
        const std::size_t j = rng.below(w2.size());
        const double saved = w2[j];
        w2[j] = saved + eps;
        const double lp = loss_of(w2, p);
        w2[j] = saved - eps;
        const double lm = loss_of(w2, p);
        w2[j] = saved;
        const double gn = (lp - lm) / (2.0 * eps);
        REQUIRE(d_win[j] == Catch::Approx(gn).margin(1e-6 * std::max(1.0, std::abs(gn))));
    }
    // parameter gradients
    for (Tensor& t : p.tensors()) {
        for (int rep = 0; rep < 4; ++rep) {
            const std::size_t j = rng.below(t.size());
            const double saved = t.value[j];
            t.value[j] = saved + eps;
            const double lp = loss_of(window, p);
            t.value[j] = saved - eps;
            const double lm = loss_of(window, p);
            t.value[j] = saved;
            const double gn = (lp - lm) / (2.0 * eps);
            REQUIRE(t.grad[j] == Catch::Approx(gn).margin(1e-5 * std::max(1.0, std::abs(gn))));
        }
    }
}

TEST_CASE("lsgan objectives") {
    const auto [ld0, lg0] = adv_losses({1.0, 1.0, 1.0}, {0.0, 0.0});
    REQUIRE(ld0 == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(lg0 == Catch::Approx(1.0).margin(1e-15));

    const auto [ld1, lg1] = adv_losses({0.0}, {1.0, 1.0});
    REQUIRE(lg1 == Catch::Approx(0.0).margin(1e-15));
    (void)ld1;

    const auto [ld2, lg2] = adv_losses({0.5}, {0.25});
    REQUIRE(ld2 == Catch::Approx(0.3125).margin(1e-15));
    REQUIRE(lg2 == Catch::Approx(0.5625).margin(1e-15));

    REQUIRE_THROWS_AS(adv_losses({}, {1.0}), std::invalid_argument);
}

TEST_CASE("total loss weighting") {
    LossWeights w0{0.0, 0.0, 0.0};
    REQUIRE(total_loss(3.0, 2.0, 1.0, 0.5, w0).total == 0.0);

    LossWeights w1{1.5, 0.0, 2.5};
    const LossReport r1 = total_loss(3.0, 2.0, 7.0, 0.0, w1);
    REQUIRE(r1.total == Catch::Approx(1.5 * 3.0 + 2.5 * 2.0).margin(1e-15));

    LossWeights w2; // defaults 1.0 / 0.1 / 1.0
    const LossReport r2 = total_loss(0.5, 0.25, 2.0, 0.0, w2);
    REQUIRE(r2.total == Catch::Approx(0.95).margin(1e-15));

    // linear in each lambda holding components fixed
    LossWeights wa{2.0, 0.3, 0.7}, wb{4.0, 0.3, 0.7};
    const double fa = total_loss(1.3, 0.9, 0.4, 0.0, wa).total;
    const double fb = total_loss(1.3, 0.9, 0.4, 0.0, wb).total;
    REQUIRE(fb - fa == Catch::Approx(2.0 * 1.3).margin(1e-12));
}
