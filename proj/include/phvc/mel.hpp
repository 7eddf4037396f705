#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "phvc/matrix.hpp"
#include "phvc/stft.hpp"

namespace phvc {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelFilterbank {
    Matrix weights; // [M, F]
    double f_min = 0.0;
    double f_max = 0.0;

    std::size_t bands() const noexcept { return weights.rows(); }
};

// Triangular filters with centers uniformly spaced on the HTK mel scale.
inline MelFilterbank mel_filterbank(const StftConfig& cfg, std::size_t n_mels = 80,
                                    double f_min = 0.0, double f_max = -1.0) {
    cfg.validate();
    if (f_max < 0.0) f_max = cfg.sample_rate / 2.0;
    if (n_mels == 0) throw std::invalid_argument("mel_filterbank: n_mels must be >= 1");
    if (!(f_min < f_max && f_max <= cfg.sample_rate / 2.0))
        throw std::invalid_argument("mel_filterbank: need f_min < f_max <= sample_rate/2");
    const std::size_t n_bins = cfg.bins();
    if (n_mels > n_bins) throw std::invalid_argument("mel_filterbank: n_mels larger than bin count");

    const double mel_lo = hz_to_mel(f_min), mel_hi = hz_to_mel(f_max);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(n_mels + 1));

    MelFilterbank fb;
    fb.f_min = f_min;
    fb.f_max = f_max;
    fb.weights = Matrix(n_mels, n_bins);
    const double bin_hz = cfg.sample_rate / double(cfg.fft_size);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = double(k) * bin_hz;
            double w = 0.0;
            if (f > lo && f < mid) w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
            fb.weights(m, k) = w;
        }
    }
    return fb;
}

// E[t, m] = sum_f fb[m, f] * (re^2 + im^2)[t, f]
inline Matrix mel_energies(const ComplexSpectrogram& spec, const MelFilterbank& fb) {
    spec.validate();
    if (fb.weights.cols() != spec.bins())
        throw std::invalid_argument("mel_energies: filterbank/spectrogram bin mismatch");
    const std::size_t n_frames = spec.frames(), n_bins = spec.bins(), n_mels = fb.bands();
    Matrix out(n_frames, n_mels);
    std::vector<double> power(n_bins);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const double* re = spec.real.row(t);
        const double* im = spec.imag.row(t);
        for (std::size_t k = 0; k < n_bins; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
        for (std::size_t m = 0; m < n_mels; ++m) {
            const double* w = fb.weights.row(m);
            double acc = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) acc += w[k] * power[k];
            out(t, m) = acc;
        }
    }
    return out;
}

// Orthonormal DCT-II of log(E + 1e-10). Coefficient 0 carries overall gain
// and is kept here; metric code excludes it.
inline Matrix mel_cepstrum(const ComplexSpectrogram& spec, const MelFilterbank& fb,
                           std::size_t n_coeffs) {
    const Matrix energies = mel_energies(spec, fb);
    const std::size_t n_mels = fb.bands();
    if (n_coeffs > n_mels) throw std::invalid_argument("mel_cepstrum: n_coeffs larger than band count");
    constexpr double eps_log = 1e-10;
    const double pi = 3.14159265358979323846;

    Matrix out(energies.rows(), n_coeffs);
    std::vector<double> log_e(n_mels);
    const double a0 = std::sqrt(1.0 / double(n_mels));
    const double aj = std::sqrt(2.0 / double(n_mels));
    for (std::size_t t = 0; t < energies.rows(); ++t) {
        for (std::size_t m = 0; m < n_mels; ++m) log_e[m] = std::log(energies(t, m) + eps_log);
        for (std::size_t j = 0; j < n_coeffs; ++j) {
            double acc = 0.0;
            for (std::size_t m = 0; m < n_mels; ++m)
                acc += log_e[m] * std::cos(pi * double(j) * (double(m) + 0.5) / double(n_mels));
            out(t, j) = (j == 0 ? a0 : aj) * acc;
        }
    }
    return out;
}

} // namespace phvc
