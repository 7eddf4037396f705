#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phvc/matrix.hpp"
#include "phvc/stft.hpp"

namespace phvc {

struct PitchConfig {
    double f0_floor = 60.0;
    double f0_ceil = 500.0;
    double voicing_threshold = 0.45;
    std::size_t frame_window = 2048;
    double rms_gate = 1e-4;

    void validate(double sample_rate) const {
        if (!(f0_floor > 0.0 && f0_floor < f0_ceil && f0_ceil < sample_rate / 2.0))
            throw std::invalid_argument("PitchConfig: need 0 < f0_floor < f0_ceil < sample_rate/2");
        if (!(voicing_threshold > 0.0 && voicing_threshold < 1.0))
            throw std::invalid_argument("PitchConfig: voicing_threshold must be in (0, 1)");
        if (frame_window < 16) throw std::invalid_argument("PitchConfig: frame_window too small");
    }
};

struct F0Contour {
    std::vector<double> f0_hz;     // 0 where unvoiced
    std::vector<std::uint8_t> voiced;
    std::size_t hop = 256;
    double sample_rate = 22050.0;

    std::size_t size() const noexcept { return f0_hz.size(); }
};

// One F0 estimate per STFT frame, same centering as stft(): tapered
// normalized autocorrelation over the lag range [sr/f0_ceil, sr/f0_floor],
// smallest peak lag near the maximum, parabolic refinement.
inline F0Contour estimate_f0(const Waveform& y, const StftConfig& stft_cfg,
                             const PitchConfig& pcfg) {
    stft_cfg.validate();
    pcfg.validate(stft_cfg.sample_rate);
    if (y.sample_rate != stft_cfg.sample_rate)
        throw std::invalid_argument("estimate_f0: sample rate mismatch");
    if (y.samples.size() < pcfg.frame_window)
        throw std::invalid_argument("estimate_f0: waveform shorter than one frame_window");

    const double sr = stft_cfg.sample_rate;
    const std::size_t len = y.samples.size();
    const std::size_t window = pcfg.frame_window;
    const std::size_t n_frames = stft_num_frames(len, stft_cfg);
    const std::size_t half = window / 2;

    std::size_t lag_min = std::size_t(std::ceil(sr / pcfg.f0_ceil));
    std::size_t lag_max = std::size_t(std::floor(sr / pcfg.f0_floor));
    lag_max = std::min(lag_max, window - 2);
    if (lag_min < 2) lag_min = 2;
    if (lag_min > lag_max)
        throw std::invalid_argument("estimate_f0: frame_window too small for f0_floor");

    const std::vector<double> taper = hann_window(window);

    F0Contour out;
    out.hop = stft_cfg.hop;
    out.sample_rate = sr;
    out.f0_hz.assign(n_frames, 0.0);
    out.voiced.assign(n_frames, 0);

    std::vector<double> seg(window), prefix_sq(window + 1);
    std::vector<double> corr(lag_max + 2, 0.0);

    for (std::size_t t = 0; t < n_frames; ++t) {
        const long long center = (long long)(t * stft_cfg.hop) +
                                 (stft_cfg.center ? 0 : (long long)(stft_cfg.win_size / 2));
        double sq_sum = 0.0;
        for (std::size_t n = 0; n < window; ++n) {
            const long long idx = center - (long long)half + (long long)n;
            const double v = (idx >= 0 && idx < (long long)len) ? y.samples[idx] : 0.0;
            sq_sum += v * v;
            seg[n] = v * taper[n];
        }
        if (std::sqrt(sq_sum / double(window)) < pcfg.rms_gate) continue;

        prefix_sq[0] = 0.0;
        for (std::size_t n = 0; n < window; ++n) prefix_sq[n + 1] = prefix_sq[n] + seg[n] * seg[n];

        const std::size_t lag_lo = lag_min - 1; // one extra lag each side for refinement
        const std::size_t lag_hi = std::min(lag_max + 1, window - 1);
        double r_best = -2.0;
        for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
            double num = 0.0;
            const std::size_t m = window - lag;
            for (std::size_t n = 0; n < m; ++n) num += seg[n] * seg[n + lag];
            const double e1 = prefix_sq[m];
            const double e2 = prefix_sq[window] - prefix_sq[lag];
            const double denom_sq = e1 * e2;
            corr[lag] = denom_sq > 1e-24 ? num / std::sqrt(denom_sq) : 0.0;
            if (lag >= lag_min && lag <= lag_max && corr[lag] > r_best) r_best = corr[lag];
        }
        if (r_best < pcfg.voicing_threshold) continue;

        // smallest local maximum close to the global one (avoids octave-down
        // picks at 2x the true period)
        const double level = std::max(pcfg.voicing_threshold, 0.9 * r_best);
        std::size_t peak = 0;
        for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
            if (corr[lag] < level) continue;
            const double left = lag > lag_lo ? corr[lag - 1] : -2.0;
            const double right = lag < lag_hi ? corr[lag + 1] : -2.0;
            if (corr[lag] >= left && corr[lag] >= right) {
                peak = lag;
                break;
            }
        }
        if (peak == 0) continue;

        double refined = double(peak);
        if (peak > lag_lo && peak < lag_hi) {
            const double rl = corr[peak - 1], r0 = corr[peak], rr = corr[peak + 1];
            const double denom = rl - 2.0 * r0 + rr;
            if (std::abs(denom) > 1e-12) {
                double delta = 0.5 * (rl - rr) / denom;
                delta = std::clamp(delta, -0.5, 0.5);
                refined += delta;
            }
        }
        const double f0 = std::clamp(sr / refined, pcfg.f0_floor, pcfg.f0_ceil);
        out.f0_hz[t] = f0;
        out.voiced[t] = 1;
    }
    return out;
}

// [T, 2] features: column 0 the voiced flag, column 1 log-normalized F0 in
// [0, 1] for voiced frames and 0 otherwise.
inline Matrix f0_features(const F0Contour& c, const PitchConfig& pcfg) {
    const double span = std::log2(pcfg.f0_ceil / pcfg.f0_floor);
    Matrix out(c.size(), 2);
    for (std::size_t t = 0; t < c.size(); ++t) {
        if (!c.voiced[t]) continue;
        out(t, 0) = 1.0;
        const double norm = std::log2(c.f0_hz[t] / pcfg.f0_floor) / span;
        out(t, 1) = std::clamp(norm, 0.0, 1.0);
    }
    return out;
}

inline void write_f0_csv(const std::string& path, const F0Contour& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "frame,f0_hz,voiced\n";
    char buf[64];
    for (std::size_t t = 0; t < c.size(); ++t) {
        std::snprintf(buf, sizeof(buf), "%.17g", c.f0_hz[t]);
        out << t << ',' << buf << ',' << int(c.voiced[t]) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline F0Contour read_f0_csv(const std::string& path, std::size_t hop, double sample_rate) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    F0Contour c;
    c.hop = hop;
    c.sample_rate = sample_rate;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty contour file " + path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string frame_s, f0_s, voiced_s;
        if (!std::getline(ss, frame_s, ',') || !std::getline(ss, f0_s, ',') ||
            !std::getline(ss, voiced_s))
            throw std::runtime_error("malformed contour row in " + path);
        c.f0_hz.push_back(std::stod(f0_s));
        c.voiced.push_back(std::uint8_t(std::stoi(voiced_s) != 0));
    }
    return c;
}

} // namespace phvc
