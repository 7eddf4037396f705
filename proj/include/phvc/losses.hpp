#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "phvc/matrix.hpp"
#include "phvc/model.hpp"
#include "phvc/rng.hpp"
#include "phvc/stft.hpp"

namespace phvc {

struct LossWeights {
    double lambda_stft = 1.0;
    double lambda_adv = 0.1;
    double lambda_phase = 1.0;

    void validate() const {
        if (!(lambda_stft >= 0.0 && lambda_adv >= 0.0 && lambda_phase >= 0.0) ||
            !std::isfinite(lambda_stft + lambda_adv + lambda_phase))
            throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
    }
};

struct MrStftResolution {
    std::size_t fft_size;
    std::size_t hop;
    std::size_t win_size;
};

struct MrStftConfig {
    std::vector<MrStftResolution> resolutions = {{512, 128, 512}, {1024, 256, 1024}, {2048, 512, 2048}};

    StftConfig stft_config(std::size_t i, double sample_rate) const {
        StftConfig c;
        c.fft_size = resolutions[i].fft_size;
        c.hop = resolutions[i].hop;
        c.win_size = resolutions[i].win_size;
        c.sample_rate = sample_rate;
        return c;
    }

    void validate(double sample_rate) const {
        if (resolutions.empty()) throw std::invalid_argument("MrStftConfig: no resolutions");
        for (std::size_t i = 0; i < resolutions.size(); ++i) stft_config(i, sample_rate).validate();
    }
};

struct LossReport {
    double l_stft = 0.0;
    double l_phase = 0.0;
    double l_adv_g = 0.0;
    double l_adv_d = 0.0;
    double total = 0.0;
};

inline LossReport total_loss(double l_stft, double l_phase, double l_adv_g, double l_adv_d,
                             const LossWeights& w) {
    w.validate();
    LossReport r;
    r.l_stft = l_stft;
    r.l_phase = l_phase;
    r.l_adv_g = l_adv_g;
    r.l_adv_d = l_adv_d;
    r.total = w.lambda_stft * l_stft + w.lambda_adv * l_adv_g + w.lambda_phase * l_phase;
    return r;
}

// ---------------------------------------------------------------------------
// Phase-aware loss: mean squared chord distance between unit-normalized
// complex spectra. Bins where either magnitude is below 1e-6 carry no phase
// and are masked out; the denominator stays T*F.
// ---------------------------------------------------------------------------
struct PhaseLossResult {
    double value = 0.0;
    Matrix d_real; // dL / dS_hat_r
    Matrix d_imag;
};

inline PhaseLossResult phase_loss(const ComplexSpectrogram& S_hat, const ComplexSpectrogram& S,
                                  double eps = 1e-8) {
    if (!S_hat.real.same_shape(S.real)) throw std::invalid_argument("phase_loss: shape mismatch");
    constexpr double mask_thresh = 1e-6;
    const std::size_t n_frames = S.frames(), n_bins = S.bins();
    PhaseLossResult out;
    out.d_real = Matrix(n_frames, n_bins);
    out.d_imag = Matrix(n_frames, n_bins);
    const double inv_tf = 1.0 / double(n_frames * n_bins);

    double acc = 0.0;
    for (std::size_t t = 0; t < n_frames; ++t) {
        for (std::size_t f = 0; f < n_bins; ++f) {
            const double sr = S.real(t, f), si = S.imag(t, f);
            const double hr = S_hat.real(t, f), hi = S_hat.imag(t, f);
            const double mag_s = std::sqrt(sr * sr + si * si);
            const double mag_h = std::sqrt(hr * hr + hi * hi);
            if (mag_s < mask_thresh || mag_h < mask_thresh) continue;
            const double rs = std::max(mag_s, eps), rh = std::max(mag_h, eps);
            const double ur = sr / rs, ui = si / rs;
            const double vr = hr / rh, vi = hi / rh;
            const double dr = ur - vr, di = ui - vi;
            acc += dr * dr + di * di;
            const double dot = ur * vr + ui * vi;
            out.d_real(t, f) = -2.0 * inv_tf / rh * (ur - dot * vr);
            out.d_imag(t, f) = -2.0 * inv_tf / rh * (ui - dot * vi);
        }
    }
    out.value = acc * inv_tf;
    return out;
}

// ---------------------------------------------------------------------------
// Multi-resolution STFT loss: spectral convergence + log-magnitude L1,
// averaged over resolutions.
// ---------------------------------------------------------------------------
class DegenerateReferenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MrStftRefs {
    std::vector<StftConfig> cfgs;
    std::vector<Matrix> mag;   // |S| per resolution
    std::vector<double> mag_norm;
    std::size_t signal_len = 0;
};

inline MrStftRefs mr_stft_prepare(const Waveform& y, const MrStftConfig& cfg) {
    cfg.validate(y.sample_rate);
    MrStftRefs refs;
    refs.signal_len = y.samples.size();
    for (std::size_t i = 0; i < cfg.resolutions.size(); ++i) {
        const StftConfig sc = cfg.stft_config(i, y.sample_rate);
        const ComplexSpectrogram S = stft(y, sc);
        Matrix m(S.frames(), S.bins());
        double norm = 0.0;
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double re = S.real.data()[j], im = S.imag.data()[j];
            const double v = std::sqrt(re * re + im * im);
            m.data()[j] = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12)
            throw DegenerateReferenceError("mr_stft_loss: reference signal has no spectral energy");
        refs.cfgs.push_back(sc);
        refs.mag.push_back(std::move(m));
        refs.mag_norm.push_back(norm);
    }
    return refs;
}

struct MrStftResult {
    double value = 0.0;    // sc + log_mag
    double sc = 0.0;       // spectral convergence, averaged over resolutions
    double log_mag = 0.0;  // log-magnitude L1, averaged over resolutions
    std::vector<double> dy; // dL / d y_hat
};

inline MrStftResult mr_stft_loss_with_refs(const Waveform& y_hat, const MrStftRefs& refs) {
    if (y_hat.samples.size() != refs.signal_len)
        throw std::invalid_argument("mr_stft_loss: length mismatch");
    constexpr double eps = 1e-5;
    const double inv_res = 1.0 / double(refs.cfgs.size());

    MrStftResult out;
    out.dy.assign(refs.signal_len, 0.0);
    for (std::size_t i = 0; i < refs.cfgs.size(); ++i) {
        const StftConfig& sc = refs.cfgs[i];
        const ComplexSpectrogram Sh = stft(y_hat, sc);
        const Matrix& m_ref = refs.mag[i];
        const std::size_t n = m_ref.size();
        const double inv_tf = 1.0 / double(n);

        double diff_norm = 0.0;
        Matrix m_hat(m_ref.rows(), m_ref.cols());
        for (std::size_t j = 0; j < n; ++j) {
            const double re = Sh.real.data()[j], im = Sh.imag.data()[j];
            m_hat.data()[j] = std::sqrt(re * re + im * im);
            const double dmag = m_hat.data()[j] - m_ref.data()[j];
            diff_norm += dmag * dmag;
        }
        diff_norm = std::sqrt(diff_norm);

        double log_l1 = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            log_l1 += std::abs(std::log(m_ref.data()[j] + eps) - std::log(m_hat.data()[j] + eps));
        log_l1 *= inv_tf;
        out.sc += inv_res * diff_norm / refs.mag_norm[i];
        out.log_mag += inv_res * log_l1;
        out.value += inv_res * (diff_norm / refs.mag_norm[i] + log_l1);

        // gradient via d|S|, then back through the analysis transform
        Matrix d_re(m_ref.rows(), m_ref.cols()), d_im(m_ref.rows(), m_ref.cols());
        const double sc_scale = diff_norm > 1e-14 ? 1.0 / (diff_norm * refs.mag_norm[i]) : 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double mh = m_hat.data()[j];
            double dmag = sc_scale * (mh - m_ref.data()[j]);
            const double lg = std::log(mh + eps) - std::log(m_ref.data()[j] + eps);
            dmag += inv_tf * (lg > 0.0 ? 1.0 : (lg < 0.0 ? -1.0 : 0.0)) / (mh + eps);
            dmag *= inv_res;
            if (mh > 1e-12) {
                d_re.data()[j] = dmag * Sh.real.data()[j] / mh;
                d_im.data()[j] = dmag * Sh.imag.data()[j] / mh;
            }
        }
        const std::vector<double> dy = stft_backward_signal(sc, d_re, d_im, refs.signal_len);
        for (std::size_t j = 0; j < refs.signal_len; ++j) out.dy[j] += dy[j];
    }
    return out;
}

inline MrStftResult mr_stft_loss(const Waveform& y_hat, const Waveform& y, const MrStftConfig& cfg) {
    if (y_hat.samples.size() != y.samples.size())
        throw std::invalid_argument("mr_stft_loss: length mismatch");
    if (y_hat.sample_rate != y.sample_rate)
        throw std::invalid_argument("mr_stft_loss: sample rate mismatch");
    return mr_stft_loss_with_refs(y_hat, mr_stft_prepare(y, cfg));
}

// ---------------------------------------------------------------------------
// Lightweight two-scale waveform discriminator: raw and 2x average-pooled
// inputs, three strided convs with leaky rectifiers, linear score per step.
// ---------------------------------------------------------------------------
namespace detail {

constexpr std::size_t kDiscScales = 2;
constexpr std::size_t kDiscKernel = 15;
constexpr std::size_t kDiscStride = 2;
constexpr std::size_t kDiscChannels[4] = {1, 16, 32, 64};
constexpr double kLeakySlope = 0.2;

// in [T, C], w [K, C, O] -> out [ceil(T/stride), O]
inline Matrix conv1d_strided(const Matrix& in, const Tensor& w, const Tensor& b,
                             std::size_t stride) {
    const std::size_t T = in.rows(), C = in.cols();
    const std::size_t K = w.shape[0], O = w.shape[2];
    const std::size_t P = K / 2;
    const std::size_t T_out = (T + stride - 1) / stride;
    Matrix out(T_out, O);
    for (std::size_t t = 0; t < T_out; ++t) {
        double* orow = out.row(t);
        for (std::size_t o = 0; o < O; ++o) orow[o] = b.value[o];
        for (std::size_t k = 0; k < K; ++k) {
            const long long src = (long long)(t * stride) + (long long)k - (long long)P;
            if (src < 0 || src >= (long long)T) continue;
            const double* irow = in.row(std::size_t(src));
            const double* wk = w.value.data() + k * C * O;
            for (std::size_t c = 0; c < C; ++c) {
                const double iv = irow[c];
                if (iv == 0.0) continue;
                const double* wc = wk + c * O;
                for (std::size_t o = 0; o < O; ++o) orow[o] += iv * wc[o];
            }
        }
    }
    return out;
}

// Input gradient always; parameter gradients only when grad_sink is given.
inline void conv1d_strided_backward(const Matrix& in, const Tensor& w, const Matrix& d_out,
                                    std::size_t stride, Matrix& d_in, Tensor* w_grad = nullptr,
                                    Tensor* b_grad = nullptr) {
    const std::size_t T = in.rows(), C = in.cols();
    const std::size_t K = w.shape[0], O = w.shape[2];
    const std::size_t P = K / 2;
    for (std::size_t t = 0; t < d_out.rows(); ++t) {
        const double* drow = d_out.row(t);
        if (b_grad)
            for (std::size_t o = 0; o < O; ++o) b_grad->grad[o] += drow[o];
        for (std::size_t k = 0; k < K; ++k) {
            const long long src = (long long)(t * stride) + (long long)k - (long long)P;
            if (src < 0 || src >= (long long)T) continue;
            const double* irow = in.row(std::size_t(src));
            double* dirow = d_in.row(std::size_t(src));
            double* gwk = w_grad ? w_grad->grad.data() + k * C * O : nullptr;
            const double* wk = w.value.data() + k * C * O;
            for (std::size_t c = 0; c < C; ++c) {
                const double iv = irow[c];
                double acc = 0.0;
                for (std::size_t o = 0; o < O; ++o) {
                    if (gwk) gwk[c * O + o] += iv * drow[o];
                    acc += wk[c * O + o] * drow[o];
                }
                dirow[c] += acc;
            }
        }
    }
}

} // namespace detail

inline ParamSet init_disc_params(std::uint64_t seed) {
    Rng rng(seed);
    ParamSet p;
    for (std::size_t s = 0; s < detail::kDiscScales; ++s) {
        const std::string scale = "disc.s" + std::to_string(s);
        for (std::size_t l = 0; l < 3; ++l) {
            const std::size_t cin = detail::kDiscChannels[l], cout = detail::kDiscChannels[l + 1];
            Tensor& w = p.add(scale + ".l" + std::to_string(l) + ".w",
                              {detail::kDiscKernel, cin, cout});
            detail::init_uniform(w, detail::kDiscKernel * cin, rng);
            p.add(scale + ".l" + std::to_string(l) + ".b", {cout});
        }
        Tensor& w = p.add(scale + ".out.w", {1, detail::kDiscChannels[3], 1});
        detail::init_uniform(w, detail::kDiscChannels[3], rng);
        p.add(scale + ".out.b", {1});
    }
    return p;
}

struct DiscRecord {
    // per scale: inputs to each conv (layer_in[0] is the scale input),
    // leaky-relu pre-activations, and the per-step scores
    std::vector<std::vector<Matrix>> layer_in;
    std::vector<std::vector<Matrix>> layer_pre;
    std::vector<std::size_t> score_offset;
    std::size_t input_len = 0;
};

inline std::vector<double> disc_forward(const std::vector<double>& window, const ParamSet& p,
                                        DiscRecord* rec = nullptr) {
    if (window.size() < 256)
        throw std::invalid_argument("disc_forward: window must be >= 256 samples");
    std::vector<double> scores;
    if (rec) {
        rec->layer_in.assign(detail::kDiscScales, {});
        rec->layer_pre.assign(detail::kDiscScales, {});
        rec->score_offset.clear();
        rec->input_len = window.size();
    }
    for (std::size_t s = 0; s < detail::kDiscScales; ++s) {
        Matrix x;
        if (s == 0) {
            x = Matrix(window.size(), 1);
            for (std::size_t i = 0; i < window.size(); ++i) x(i, 0) = window[i];
        } else {
            const std::size_t half = window.size() / 2;
            x = Matrix(half, 1);
            for (std::size_t i = 0; i < half; ++i)
                x(i, 0) = 0.5 * (window[2 * i] + window[2 * i + 1]);
        }
        const std::string scale = "disc.s" + std::to_string(s);
        for (std::size_t l = 0; l < 3; ++l) {
            const std::string base = scale + ".l" + std::to_string(l);
            Matrix pre = detail::conv1d_strided(x, p.at(base + ".w"), p.at(base + ".b"),
                                                detail::kDiscStride);
            if (rec) {
                rec->layer_in[s].push_back(x);
                rec->layer_pre[s].push_back(pre);
            }
            Matrix act(pre.rows(), pre.cols());
            for (std::size_t j = 0; j < pre.size(); ++j) {
                const double v = pre.data()[j];
                act.data()[j] = v > 0.0 ? v : detail::kLeakySlope * v;
            }
            x = std::move(act);
        }
        Matrix sc = detail::conv1d_strided(x, p.at(scale + ".out.w"), p.at(scale + ".out.b"), 1);
        if (rec) {
            rec->layer_in[s].push_back(x);
            rec->score_offset.push_back(scores.size());
        }
        for (std::size_t t = 0; t < sc.rows(); ++t) scores.push_back(sc(t, 0));
    }
    return scores;
}

// Backward through the discriminator. Accumulates parameter gradients when
// accum_params is set; returns the gradient with respect to the raw window.
inline std::vector<double> disc_backward(const DiscRecord& rec, const std::vector<double>& d_scores,
                                         ParamSet& p, bool accum_params) {
    std::vector<double> d_window(rec.input_len, 0.0);
    for (std::size_t s = 0; s < detail::kDiscScales; ++s) {
        const std::string scale = "disc.s" + std::to_string(s);
        const std::size_t off = rec.score_offset[s];
        const Matrix& top_in = rec.layer_in[s][3];
        const std::size_t n_scores =
            (s + 1 < detail::kDiscScales ? rec.score_offset[s + 1] : d_scores.size()) - off;
        Matrix d_sc(n_scores, 1);
        for (std::size_t t = 0; t < n_scores; ++t) d_sc(t, 0) = d_scores[off + t];

        Tensor& wout = p.at(scale + ".out.w");
        Tensor& bout = p.at(scale + ".out.b");
        Matrix dx(top_in.rows(), top_in.cols());
        detail::conv1d_strided_backward(top_in, wout, d_sc, 1, dx, accum_params ? &wout : nullptr,
                                        accum_params ? &bout : nullptr);

        for (std::size_t l = 3; l-- > 0;) {
            const std::string base = scale + ".l" + std::to_string(l);
            const Matrix& pre = rec.layer_pre[s][l];
            Matrix d_pre(pre.rows(), pre.cols());
            for (std::size_t j = 0; j < pre.size(); ++j)
                d_pre.data()[j] = dx.data()[j] * (pre.data()[j] > 0.0 ? 1.0 : detail::kLeakySlope);
            const Matrix& in = rec.layer_in[s][l];
            Tensor& w = p.at(base + ".w");
            Tensor& b = p.at(base + ".b");
            Matrix d_in(in.rows(), in.cols());
            detail::conv1d_strided_backward(in, w, d_pre, detail::kDiscStride, d_in,
                                            accum_params ? &w : nullptr,
                                            accum_params ? &b : nullptr);
            dx = std::move(d_in);
        }

        if (s == 0) {
            for (std::size_t i = 0; i < rec.input_len; ++i) d_window[i] += dx(i, 0);
        } else {
            for (std::size_t i = 0; i < dx.rows(); ++i) {
                d_window[2 * i] += 0.5 * dx(i, 0);
                d_window[2 * i + 1] += 0.5 * dx(i, 0);
            }
        }
    }
    return d_window;
}

// Least-squares GAN objectives: l_d = mean((r-1)^2) + mean(f^2),
// l_g = mean((f-1)^2).
inline std::pair<double, double> adv_losses(const std::vector<double>& real_scores,
                                            const std::vector<double>& fake_scores) {
    if (real_scores.empty() || fake_scores.empty())
        throw std::invalid_argument("adv_losses: empty score sequence");
    double ld = 0.0, lg = 0.0;
    for (double r : real_scores) ld += (r - 1.0) * (r - 1.0);
    ld /= double(real_scores.size());
    double lf = 0.0;
    for (double f : fake_scores) {
        lf += f * f;
        lg += (f - 1.0) * (f - 1.0);
    }
    return {ld + lf / double(fake_scores.size()), lg / double(fake_scores.size())};
}

// ---------------------------------------------------------------------------
// Composite generator objective (Eq.-4 style weighting) with the full
// gradient with respect to the predicted spectrum. Waveform-domain terms
// (MR-STFT, adversarial) flow back through the synthesis ISTFT.
// ---------------------------------------------------------------------------
struct GeneratorObjective {
    LossReport report;
    Matrix d_real;
    Matrix d_imag;
};

inline GeneratorObjective generator_objective(const ComplexSpectrogram& S_hat,
                                              const Waveform& y_hat,
                                              const ComplexSpectrogram& S_ref,
                                              const MrStftRefs& mr_refs, const LossWeights& w,
                                              ParamSet* disc = nullptr) {
    w.validate();
    GeneratorObjective out;
    const std::size_t n_frames = S_hat.frames(), n_bins = S_hat.bins();
    out.d_real = Matrix(n_frames, n_bins);
    out.d_imag = Matrix(n_frames, n_bins);

    double l_phase = 0.0, l_stft = 0.0, l_adv_g = 0.0;
    if (w.lambda_phase > 0.0) {
        PhaseLossResult ph = phase_loss(S_hat, S_ref);
        l_phase = ph.value;
        for (std::size_t j = 0; j < out.d_real.size(); ++j) {
            out.d_real.data()[j] += w.lambda_phase * ph.d_real.data()[j];
            out.d_imag.data()[j] += w.lambda_phase * ph.d_imag.data()[j];
        }
    }

    std::vector<double> dy(y_hat.samples.size(), 0.0);
    bool have_dy = false;
    if (w.lambda_stft > 0.0) {
        MrStftResult mr = mr_stft_loss_with_refs(y_hat, mr_refs);
        l_stft = mr.value;
        for (std::size_t j = 0; j < dy.size(); ++j) dy[j] += w.lambda_stft * mr.dy[j];
        have_dy = true;
    }
    if (w.lambda_adv > 0.0 && disc != nullptr) {
        DiscRecord rec;
        const std::vector<double> scores = disc_forward(y_hat.samples, *disc, &rec);
        std::vector<double> ds(scores.size());
        const double inv_n = 1.0 / double(scores.size());
        for (std::size_t j = 0; j < scores.size(); ++j) {
            l_adv_g += (scores[j] - 1.0) * (scores[j] - 1.0) * inv_n;
            ds[j] = 2.0 * (scores[j] - 1.0) * inv_n;
        }
        const std::vector<double> d_win = disc_backward(rec, ds, *disc, /*accum_params=*/false);
        for (std::size_t j = 0; j < dy.size(); ++j) dy[j] += w.lambda_adv * d_win[j];
        have_dy = true;
    }
    if (have_dy) {
        Matrix dre, dim;
        istft_backward(S_hat.config, n_frames, y_hat.samples.size(), dy, dre, dim);
        for (std::size_t j = 0; j < out.d_real.size(); ++j) {
            out.d_real.data()[j] += dre.data()[j];
            out.d_imag.data()[j] += dim.data()[j];
        }
    }
    out.report = total_loss(l_stft, l_phase, l_adv_g, 0.0, w);
    return out;
}

} // namespace phvc
