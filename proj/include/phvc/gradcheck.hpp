#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "phvc/losses.hpp"
#include "phvc/model.hpp"
#include "phvc/rng.hpp"
#include "phvc/stft.hpp"

namespace phvc {

enum class GradCheckLoss { Quadratic, PhaseOnly, MrStftOnly, Composite };

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t n_checked = 0;
};

namespace detail {

struct GradCheckSetup {
    StftConfig stft_cfg;
    PitchConfig pitch_cfg;
    Matrix X;
    F0Contour contour;
    ComplexSpectrogram S_ref;
    MrStftRefs mr_refs;
    std::size_t out_len = 0;
};

inline GradCheckSetup gradcheck_setup(const ModelConfig& cfg, std::size_t n_frames,
                                      std::uint64_t seed) {
    GradCheckSetup s;
    s.stft_cfg.fft_size = 2 * (cfg.freq_bins - 1);
    s.stft_cfg.win_size = s.stft_cfg.fft_size;
    s.stft_cfg.hop = s.stft_cfg.fft_size / 4;
    s.stft_cfg.sample_rate = 22050.0;
    s.stft_cfg.validate();
    s.out_len = (n_frames - 1) * s.stft_cfg.hop;

    Rng rng(seed);
    Waveform y;
    y.sample_rate = s.stft_cfg.sample_rate;
    y.samples.resize(s.out_len);
    for (double& v : y.samples) v = rng.uniform(-0.5, 0.5);
    s.S_ref = stft(y, s.stft_cfg);
    s.X = log_magnitude_features(s.S_ref);

    s.contour.hop = s.stft_cfg.hop;
    s.contour.sample_rate = s.stft_cfg.sample_rate;
    s.contour.f0_hz.resize(n_frames);
    s.contour.voiced.resize(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const bool v = (t % 3) != 2; // mix of voiced and gated frames
        s.contour.voiced[t] = v;
        s.contour.f0_hz[t] = v ? rng.uniform(100.0, 400.0) : 0.0;
    }

    MrStftConfig mr;
    mr.resolutions = {{s.stft_cfg.fft_size, s.stft_cfg.hop, s.stft_cfg.win_size},
                      {s.stft_cfg.fft_size / 2, s.stft_cfg.hop / 2, s.stft_cfg.win_size / 2}};
    s.mr_refs = mr_stft_prepare(y, mr);
    return s;
}

inline LossWeights gradcheck_weights(GradCheckLoss spec) {
    LossWeights w;
    w.lambda_adv = 0.0;
    switch (spec) {
        case GradCheckLoss::PhaseOnly:
            w.lambda_stft = 0.0;
            w.lambda_phase = 1.0;
            break;
        case GradCheckLoss::MrStftOnly:
            w.lambda_stft = 1.0;
            w.lambda_phase = 0.0;
            break;
        default:
            w.lambda_stft = 1.0;
            w.lambda_phase = 1.0;
            break;
    }
    return w;
}

inline double gradcheck_loss_value(const GradCheckSetup& s, const ModelConfig& cfg,
                                   const ParamSet& p, GradCheckLoss spec) {
    const ModelRecord rec =
        model_forward(s.X, s.contour, p, cfg, s.stft_cfg, s.pitch_cfg, s.out_len);
    return generator_objective(rec.S_hat, rec.y_hat, s.S_ref, s.mr_refs, gradcheck_weights(spec))
        .report.total;
}

} // namespace detail

namespace detail {

// Harness self-test: the "parameters" are the spectrum entries themselves
// and L = 0.5 * ||S||^2 has the closed-form gradient S. The loss is exactly
// quadratic in every coordinate, so central differences carry no truncation
// error and the check isolates the finite-difference machinery.
inline GradCheckResult quadratic_self_check(const ModelConfig& cfg, std::uint64_t seed,
                                            std::size_t n_frames) {
    Rng rng(seed);
    std::vector<double> s(2 * n_frames * cfg.freq_bins);
    // magnitudes bounded away from zero keep the relative-error denominator
    // honest; the loss is exactly quadratic so the step can be generous
    for (double& v : s) v = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.5, 1.0);
    auto loss = [&]() {
        double acc = 0.0;
        for (double v : s) acc += v * v;
        return 0.5 * acc;
    };
    const double fd_eps = 1e-3;
    GradCheckResult result;
    for (std::size_t j = 0; j < s.size(); ++j) {
        const double ga = s[j]; // analytic gradient equals the value
        const double saved = s[j];
        s[j] = saved + fd_eps;
        const double lp = loss();
        s[j] = saved - fd_eps;
        const double lm = loss();
        s[j] = saved;
        const double gn = (lp - lm) / (2.0 * fd_eps);
        const double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
        result.max_rel_err = std::max(result.max_rel_err, rel);
        ++result.n_checked;
    }
    return result;
}

} // namespace detail

// Forward + hand-written backward vs central finite differences over a
// seeded subsample of coordinates (all of them for small tensors). Returns
// max relative error max(|ga - gn| / max(|ga|, |gn|, 1e-8)).
inline GradCheckResult check_gradients(const ModelConfig& cfg, GradCheckLoss spec,
                                       std::uint64_t seed = 1234,
                                       std::size_t coords_per_tensor = 200,
                                       std::size_t n_frames = 6) {
    cfg.validate();
    if (spec == GradCheckLoss::Quadratic)
        return detail::quadratic_self_check(cfg, seed, n_frames);

    detail::GradCheckSetup s = detail::gradcheck_setup(cfg, n_frames, seed);
    ParamSet p = init_params(cfg);
    const ModelRecord rec =
        model_forward(s.X, s.contour, p, cfg, s.stft_cfg, s.pitch_cfg, s.out_len);
    GeneratorObjective obj = generator_objective(rec.S_hat, rec.y_hat, s.S_ref, s.mr_refs,
                                                 detail::gradcheck_weights(spec));
    model_backward(rec, obj.d_real, obj.d_imag, p, cfg);

    const double fd_eps = 1e-5;
    Rng pick(seed ^ 0x5151515151515151ull);
    GradCheckResult result;
    for (Tensor& t : p.tensors()) {
        std::vector<std::size_t> coords;
        if (t.size() <= coords_per_tensor) {
            coords.resize(t.size());
            for (std::size_t j = 0; j < t.size(); ++j) coords[j] = j;
        } else {
            std::set<std::size_t> chosen;
            while (chosen.size() < coords_per_tensor) chosen.insert(pick.below(t.size()));
            coords.assign(chosen.begin(), chosen.end());
        }
        for (std::size_t j : coords) {
            const double saved = t.value[j];
            t.value[j] = saved + fd_eps;
            const double lp = detail::gradcheck_loss_value(s, cfg, p, spec);
            t.value[j] = saved - fd_eps;
            const double lm = detail::gradcheck_loss_value(s, cfg, p, spec);
            t.value[j] = saved;
            // a difference below the rounding resolution of the loss value is
            // a measured zero, not a finite-difference estimate (softmax makes
            // some coordinates, e.g. uniform key shifts, exactly flat)
            const double resolution = 64.0 * 2.220446049250313e-16 * std::max(std::abs(lp), std::abs(lm));
            const double gn = std::abs(lp - lm) <= resolution ? 0.0 : (lp - lm) / (2.0 * fd_eps);
            const double ga = t.grad[j];
            const double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.n_checked;
        }
    }
    return result;
}

} // namespace phvc
