#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "phvc/mel.hpp"
#include "phvc/pitch.hpp"
#include "phvc/rng.hpp"
#include "phvc/stft.hpp"

namespace phvc {

class UndefinedMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MetricsReport {
    double f0_rmse_hz = 0.0;
    double vuv_error_pct = 0.0;
    double mcd_db = 0.0;
    std::vector<double> residual_mel;
    std::size_t n_frames_compared = 0;
};

// RMSE over frames voiced in BOTH contours, plus the count of frames used.
inline std::pair<double, std::size_t> f0_rmse(const F0Contour& ref, const F0Contour& est) {
    if (ref.size() != est.size()) throw std::invalid_argument("f0_rmse: contour length mismatch");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
        if (!ref.voiced[t] || !est.voiced[t]) continue;
        const double d = ref.f0_hz[t] - est.f0_hz[t];
        acc += d * d;
        ++n;
    }
    if (n == 0) throw UndefinedMetricError("f0_rmse: no jointly voiced frames");
    return {std::sqrt(acc / double(n)), n};
}

inline double vuv_error(const F0Contour& ref, const F0Contour& est) {
    if (ref.size() != est.size() || ref.size() == 0)
        throw std::invalid_argument("vuv_error: contour length mismatch");
    std::size_t bad = 0;
    for (std::size_t t = 0; t < ref.size(); ++t)
        if ((ref.voiced[t] != 0) != (est.voiced[t] != 0)) ++bad;
    return 100.0 * double(bad) / double(ref.size());
}

// Mel-cepstral distortion in dB over cepstral coefficients 1..13; the gain
// coefficient 0 is excluded, so MCD is invariant to global scaling.
inline double mcd_from_cepstra(const Matrix& c_ref, const Matrix& c_est) {
    if (!c_ref.same_shape(c_est) || c_ref.cols() < 14)
        throw std::invalid_argument("mcd: cepstra must share shape with >= 14 coefficients");
    double acc = 0.0;
    for (std::size_t t = 0; t < c_ref.rows(); ++t) {
        double frame = 0.0;
        for (std::size_t j = 1; j < 14; ++j) {
            const double d = c_ref(t, j) - c_est(t, j);
            frame += d * d;
        }
        acc += std::sqrt(frame);
    }
    constexpr double scale = 10.0 / 2.302585092994045684017991 * 1.4142135623730950488017;
    return scale * acc / double(c_ref.rows());
}

inline double mcd(const Waveform& ref, const Waveform& est, const StftConfig& cfg,
                  std::size_t n_mels = 80) {
    if (ref.samples.size() != est.samples.size())
        throw std::invalid_argument("mcd: length mismatch");
    if (ref.sample_rate != est.sample_rate) throw std::invalid_argument("mcd: sample rate mismatch");
    const MelFilterbank fb = mel_filterbank(cfg, n_mels);
    constexpr std::size_t n_coeffs = 14;
    const Matrix c_ref = mel_cepstrum(stft(ref, cfg), fb, n_coeffs);
    const Matrix c_est = mel_cepstrum(stft(est, cfg), fb, n_coeffs);
    return mcd_from_cepstra(c_ref, c_est);
}

// Per-frame L2 distance between log-mel energies, eps = 1e-10.
inline std::vector<double> residual_mel_energy(const Waveform& ref, const Waveform& est,
                                               const StftConfig& cfg, const MelFilterbank& fb) {
    if (ref.samples.size() != est.samples.size())
        throw std::invalid_argument("residual_mel_energy: length mismatch");
    constexpr double eps = 1e-10;
    const Matrix e_ref = mel_energies(stft(ref, cfg), fb);
    const Matrix e_est = mel_energies(stft(est, cfg), fb);
    std::vector<double> out(e_ref.rows());
    for (std::size_t t = 0; t < e_ref.rows(); ++t) {
        double acc = 0.0;
        for (std::size_t m = 0; m < e_ref.cols(); ++m) {
            const double d = std::log(e_ref(t, m) + eps) - std::log(e_est(t, m) + eps);
            acc += d * d;
        }
        out[t] = std::sqrt(acc);
    }
    return out;
}

struct GriffinLimResult {
    Waveform waveform;
    std::vector<double> sc_trace; // spectral convergence after each iteration
};

// Classical alternating projection from a magnitude target: random phase
// init, then repeatedly resynthesize and take the phase of the analysis.
// The least-squares ISTFT makes the trace non-increasing.
inline GriffinLimResult griffin_lim(const Matrix& mag, const StftConfig& cfg,
                                    std::size_t iters = 32, std::uint64_t seed = 0,
                                    std::size_t out_len = 0,
                                    const ComplexSpectrogram* phase_init = nullptr) {
    cfg.validate();
    if (mag.cols() != cfg.bins()) throw std::invalid_argument("griffin_lim: F != fft_size/2 + 1");
    for (std::size_t j = 0; j < mag.size(); ++j)
        if (!(mag.data()[j] >= 0.0)) throw std::invalid_argument("griffin_lim: magnitudes must be >= 0");
    const std::size_t n_frames = mag.rows();
    if (out_len == 0) out_len = (n_frames - 1) * cfg.hop;
    if (out_len == 0) throw std::invalid_argument("griffin_lim: need more than one frame");

    GriffinLimResult res;
    res.waveform.sample_rate = cfg.sample_rate;

    double mag_norm = 0.0;
    for (std::size_t j = 0; j < mag.size(); ++j) mag_norm += mag.data()[j] * mag.data()[j];
    mag_norm = std::sqrt(mag_norm);
    if (mag_norm < 1e-300) { // all-zero magnitude: silence, no iteration
        res.waveform.samples.assign(out_len, 0.0);
        return res;
    }

    Rng rng(seed);
    ComplexSpectrogram X{Matrix(n_frames, mag.cols()), Matrix(n_frames, mag.cols()), cfg};
    const double pi = 3.14159265358979323846;
    if (phase_init != nullptr) {
        for (std::size_t j = 0; j < mag.size(); ++j) {
            const double re = phase_init->real.data()[j], im = phase_init->imag.data()[j];
            const double m = std::sqrt(re * re + im * im);
            const double scale = m > 1e-300 ? mag.data()[j] / m : 0.0;
            X.real.data()[j] = re * scale;
            X.imag.data()[j] = im * scale;
        }
    } else {
        for (std::size_t j = 0; j < mag.size(); ++j) {
            const double phi = rng.uniform(-pi, pi);
            X.real.data()[j] = mag.data()[j] * std::cos(phi);
            X.imag.data()[j] = mag.data()[j] * std::sin(phi);
        }
    }

    Waveform y = istft(X, out_len);
    for (std::size_t it = 0; it < iters; ++it) {
        const ComplexSpectrogram S = stft(y, cfg);
        double diff = 0.0;
        for (std::size_t j = 0; j < mag.size(); ++j) {
            const double m = std::sqrt(S.real.data()[j] * S.real.data()[j] +
                                       S.imag.data()[j] * S.imag.data()[j]);
            const double d = m - mag.data()[j];
            diff += d * d;
            const double scale = m > 1e-300 ? mag.data()[j] / m : 0.0;
            X.real.data()[j] = S.real.data()[j] * scale;
            X.imag.data()[j] = S.imag.data()[j] * scale;
        }
        res.sc_trace.push_back(std::sqrt(diff) / mag_norm);
        y = istft(X, out_len);
    }
    res.waveform = std::move(y);
    return res;
}

// estimate_f0 on both signals, then the Table-style objective metrics.
inline MetricsReport evaluate_pair(const Waveform& ref, const Waveform& est,
                                   const StftConfig& stft_cfg = StftConfig{},
                                   const PitchConfig& pcfg = PitchConfig{},
                                   std::size_t n_mels = 80) {
    if (ref.samples.size() != est.samples.size())
        throw std::invalid_argument("evaluate_pair: length mismatch");
    MetricsReport rep;
    const F0Contour c_ref = estimate_f0(ref, stft_cfg, pcfg);
    const F0Contour c_est = estimate_f0(est, stft_cfg, pcfg);
    const auto [rmse, n] = f0_rmse(c_ref, c_est);
    rep.f0_rmse_hz = rmse;
    rep.n_frames_compared = n;
    rep.vuv_error_pct = vuv_error(c_ref, c_est);
    rep.mcd_db = mcd(ref, est, stft_cfg, n_mels);
    const MelFilterbank fb = mel_filterbank(stft_cfg, n_mels);
    rep.residual_mel = residual_mel_energy(ref, est, stft_cfg, fb);
    return rep;
}

} // namespace phvc
