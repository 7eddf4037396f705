#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "phvc/fft.hpp"
#include "phvc/matrix.hpp"

namespace phvc {

// Raised when an overlap-add normalization denominator collapses, i.e. the
// window/hop pair does not satisfy COLA over the requested range.
class NumericDegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class WindowKind { PeriodicHann };

struct StftConfig {
    std::size_t fft_size = 1024;
    std::size_t win_size = 1024;
    std::size_t hop = 256;
    WindowKind window = WindowKind::PeriodicHann;
    bool center = true;
    double sample_rate = 22050.0;

    std::size_t bins() const noexcept { return fft_size / 2 + 1; }

    void validate() const {
        if (fft_size < 2 || !fft::is_pow2(fft_size))
            throw std::invalid_argument("StftConfig: fft_size must be a power of two >= 2");
        if (hop == 0) throw std::invalid_argument("StftConfig: hop must be >= 1");
        if (!(hop <= win_size && win_size <= fft_size))
            throw std::invalid_argument("StftConfig: need hop <= win_size <= fft_size");
        if (sample_rate <= 0.0) throw std::invalid_argument("StftConfig: sample_rate must be > 0");
    }
};

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 22050.0;

    std::size_t size() const noexcept { return samples.size(); }
};

struct ComplexSpectrogram {
    Matrix real; // [T, F]
    Matrix imag; // [T, F]
    StftConfig config;

    std::size_t frames() const noexcept { return real.rows(); }
    std::size_t bins() const noexcept { return real.cols(); }

    void validate() const {
        if (!real.same_shape(imag))
            throw std::invalid_argument("ComplexSpectrogram: real/imag shape mismatch");
        if (real.cols() != config.bins())
            throw std::invalid_argument("ComplexSpectrogram: F != fft_size/2 + 1");
    }
};

// Periodic Hann, w[k] = 0.5 * (1 - cos(2*pi*k/n)). The periodic form keeps
// the squared-window overlap sum exactly constant at hop = n/4.
inline std::vector<double> hann_window(std::size_t n) {
    if (n == 0) throw std::invalid_argument("hann_window: n must be >= 1");
    std::vector<double> w(n);
    const double two_pi = 6.283185307179586476925287;
    for (std::size_t k = 0; k < n; ++k) w[k] = 0.5 * (1.0 - std::cos(two_pi * double(k) / double(n)));
    return w;
}

namespace detail {

// Reflection without edge duplication: bounce i into [0, n-1].
inline std::size_t reflect_index(long long i, std::size_t n) {
    if (n == 1) return 0;
    const long long period = 2 * ((long long)n - 1);
    long long m = i % period;
    if (m < 0) m += period;
    if (m >= (long long)n) m = period - m;
    return std::size_t(m);
}

inline void check_finite(const std::vector<double>& x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

} // namespace detail

inline std::size_t stft_num_frames(std::size_t len, const StftConfig& cfg) {
    if (cfg.center) return len / cfg.hop + 1;
    if (len < cfg.win_size)
        throw std::invalid_argument("stft: signal shorter than one window with center=false");
    return (len - cfg.win_size) / cfg.hop + 1;
}

// Windowed one-sided STFT. With center=true the signal is reflect-padded by
// win_size/2 so frame t is centered at sample t*hop.
inline ComplexSpectrogram stft(const Waveform& y, const StftConfig& cfg) {
    cfg.validate();
    if (y.samples.empty()) throw std::invalid_argument("stft: empty signal");
    if (!cfg.center && y.samples.size() < 2)
        throw std::invalid_argument("stft: signal shorter than 2 samples with center=false");
    if (y.sample_rate != cfg.sample_rate)
        throw std::invalid_argument("stft: waveform sample rate does not match config");
    detail::check_finite(y.samples, "stft");

    const std::size_t len = y.samples.size();
    const std::size_t win = cfg.win_size, fft_n = cfg.fft_size, hop = cfg.hop;
    const std::size_t pad = cfg.center ? win / 2 : 0;
    const std::size_t n_frames = stft_num_frames(len, cfg);
    const std::size_t n_bins = cfg.bins();
    const std::vector<double> w = hann_window(win);

    ComplexSpectrogram out{Matrix(n_frames, n_bins), Matrix(n_frames, n_bins), cfg};
    std::vector<double> frame(fft_n, 0.0);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const std::size_t start = t * hop;
        for (std::size_t k = 0; k < win; ++k) {
            const long long src = (long long)(start + k) - (long long)pad;
            const double s = cfg.center
                                 ? y.samples[detail::reflect_index(src, len)]
                                 : y.samples[start + k];
            frame[k] = s * w[k];
        }
        std::fill(frame.begin() + win, frame.end(), 0.0);
        fft::rfft(frame.data(), fft_n, out.real.row(t), out.imag.row(t));
    }
    return out;
}

namespace detail {

// Per-output-sample OLA normalization with the reflect pad folded back in.
// Folding makes istft the exact least-squares inverse of stft: the Gram of
// (reflect-pad -> window -> frame) is diagonal in the source samples.
inline std::vector<double> folded_window_norm(const StftConfig& cfg, std::size_t n_frames,
                                              std::size_t out_len) {
    const std::size_t win = cfg.win_size, hop = cfg.hop;
    const std::size_t pad = cfg.center ? win / 2 : 0;
    const std::vector<double> w = hann_window(win);
    std::vector<double> den(out_len + 2 * pad, 0.0);
    for (std::size_t t = 0; t < n_frames; ++t)
        for (std::size_t k = 0; k < win; ++k) {
            const std::size_t n = t * hop + k;
            if (n < den.size()) den[n] += w[k] * w[k];
        }
    if (!cfg.center) {
        den.resize(out_len);
        return den;
    }
    std::vector<double> folded(out_len, 0.0);
    for (std::size_t n = 0; n < den.size(); ++n)
        folded[reflect_index((long long)n - (long long)pad, out_len)] += den[n];
    return folded;
}

} // namespace detail

// Overlap-add ISTFT with squared-window normalization; exact inverse of
// stft under COLA and the least-squares inverse for inconsistent spectra.
inline Waveform istft(const ComplexSpectrogram& spec, std::size_t out_len) {
    const StftConfig& cfg = spec.config;
    cfg.validate();
    spec.validate();
    if (out_len == 0) throw std::invalid_argument("istft: out_len must be >= 1");
    if (stft_num_frames(out_len, cfg) != spec.frames())
        throw std::invalid_argument("istft: out_len inconsistent with frame count");

    const std::size_t win = cfg.win_size, fft_n = cfg.fft_size, hop = cfg.hop;
    const std::size_t pad = cfg.center ? win / 2 : 0;
    const std::size_t n_frames = spec.frames();
    const std::vector<double> w = hann_window(win);

    std::vector<double> acc(out_len + 2 * pad, 0.0);
    std::vector<double> xt(fft_n);
    for (std::size_t t = 0; t < n_frames; ++t) {
        fft::irfft(spec.real.row(t), spec.imag.row(t), fft_n, xt.data());
        for (std::size_t k = 0; k < win; ++k) {
            const std::size_t n = t * hop + k;
            if (n < acc.size()) acc[n] += w[k] * xt[k];
        }
    }

    std::vector<double> num(out_len, 0.0);
    if (cfg.center) {
        for (std::size_t n = 0; n < acc.size(); ++n)
            num[detail::reflect_index((long long)n - (long long)pad, out_len)] += acc[n];
    } else {
        for (std::size_t n = 0; n < out_len; ++n) num[n] = acc[n];
    }

    const std::vector<double> den = detail::folded_window_norm(cfg, n_frames, out_len);
    Waveform y;
    y.sample_rate = cfg.sample_rate;
    y.samples.resize(out_len);
    for (std::size_t n = 0; n < out_len; ++n) {
        if (den[n] < 1e-12)
            throw NumericDegenerateError("istft: overlap-add normalization below 1e-12 at sample " +
                                         std::to_string(n));
        y.samples[n] = num[n] / den[n];
    }
    return y;
}

// Gradient of istft: maps dL/dy (length out_len) back to dL/d(real, imag).
inline void istft_backward(const StftConfig& cfg, std::size_t n_frames, std::size_t out_len,
                           const std::vector<double>& dy, Matrix& d_real, Matrix& d_imag) {
    cfg.validate();
    if (dy.size() != out_len) throw std::invalid_argument("istft_backward: dy length mismatch");
    const std::size_t win = cfg.win_size, fft_n = cfg.fft_size, hop = cfg.hop;
    const std::size_t pad = cfg.center ? win / 2 : 0;
    const std::size_t n_bins = cfg.bins();
    const std::vector<double> w = hann_window(win);
    const std::vector<double> den = detail::folded_window_norm(cfg, n_frames, out_len);

    std::vector<double> g(out_len);
    for (std::size_t n = 0; n < out_len; ++n) {
        if (den[n] < 1e-12)
            throw NumericDegenerateError("istft_backward: degenerate normalization");
        g[n] = dy[n] / den[n];
    }
    std::vector<double> gpad(out_len + 2 * pad, 0.0);
    if (cfg.center) {
        for (std::size_t n = 0; n < gpad.size(); ++n)
            gpad[n] = g[detail::reflect_index((long long)n - (long long)pad, out_len)];
    } else {
        for (std::size_t n = 0; n < out_len; ++n) gpad[n] = g[n];
    }

    d_real = Matrix(n_frames, n_bins);
    d_imag = Matrix(n_frames, n_bins);
    std::vector<double> fg(fft_n, 0.0);
    for (std::size_t t = 0; t < n_frames; ++t) {
        for (std::size_t k = 0; k < win; ++k) {
            const std::size_t n = t * hop + k;
            fg[k] = (n < gpad.size()) ? w[k] * gpad[n] : 0.0;
        }
        std::fill(fg.begin() + win, fg.end(), 0.0);
        fft::irfft_adjoint(fg.data(), fft_n, d_real.row(t), d_imag.row(t));
    }
}

// Gradient of stft with respect to the input signal: maps dL/d(real, imag)
// back to dL/dy (length out_len).
inline std::vector<double> stft_backward_signal(const StftConfig& cfg, const Matrix& d_real,
                                                const Matrix& d_imag, std::size_t out_len) {
    cfg.validate();
    if (!d_real.same_shape(d_imag)) throw std::invalid_argument("stft_backward_signal: shape mismatch");
    const std::size_t win = cfg.win_size, fft_n = cfg.fft_size, hop = cfg.hop;
    const std::size_t pad = cfg.center ? win / 2 : 0;
    const std::size_t n_frames = d_real.rows();
    const std::vector<double> w = hann_window(win);

    std::vector<double> dpad(out_len + 2 * pad, 0.0);
    std::vector<double> fg(fft_n);
    for (std::size_t t = 0; t < n_frames; ++t) {
        fft::rfft_adjoint(d_real.row(t), d_imag.row(t), fft_n, fg.data());
        for (std::size_t k = 0; k < win; ++k) {
            const std::size_t n = t * hop + k;
            if (n < dpad.size()) dpad[n] += w[k] * fg[k];
        }
    }
    std::vector<double> dy(out_len, 0.0);
    if (cfg.center) {
        for (std::size_t n = 0; n < dpad.size(); ++n)
            dy[detail::reflect_index((long long)n - (long long)pad, out_len)] += dpad[n];
    } else {
        for (std::size_t n = 0; n < out_len && n < dpad.size(); ++n) dy[n] = dpad[n];
    }
    return dy;
}

} // namespace phvc
