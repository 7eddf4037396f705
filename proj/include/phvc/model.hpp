#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "phvc/matrix.hpp"
#include "phvc/pitch.hpp"
#include "phvc/rng.hpp"
#include "phvc/stft.hpp"

namespace phvc {

struct ModelConfig {
    std::size_t d = 64;        // hidden width
    std::size_t freq_bins = 513;
    std::size_t n_enc_blocks = 2;
    std::size_t kernel = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (d < 2) throw std::invalid_argument("ModelConfig: d must be >= 2");
        if (kernel % 2 == 0) throw std::invalid_argument("ModelConfig: kernel must be odd");
        if (freq_bins < 2) throw std::invalid_argument("ModelConfig: freq_bins must be >= 2");
    }
};

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    std::size_t size() const noexcept { return value.size(); }
};

// Named parameter tensors with paired gradient buffers. Iteration order is
// creation order, which fixes the RNG draw order and the checkpoint layout.
class ParamSet {
public:
    Tensor& add(const std::string& name, std::vector<std::size_t> shape) {
        if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate tensor " + name);
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        Tensor t;
        t.name = name;
        t.shape = std::move(shape);
        t.value.assign(n, 0.0);
        t.grad.assign(n, 0.0);
        index_[name] = tensors_.size();
        tensors_.push_back(std::move(t));
        return tensors_.back();
    }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamSet: no tensor named " + name);
        return tensors_[it->second];
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamSet: no tensor named " + name);
        return tensors_[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Tensor>& tensors() noexcept { return tensors_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    void zero_grads() {
        for (Tensor& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
    }

    void scale_grads(double s) {
        for (Tensor& t : tensors_)
            for (double& g : t.grad) g *= s;
    }

    double grad_norm() const {
        double acc = 0.0;
        for (const Tensor& t : tensors_)
            for (double g : t.grad) acc += g * g;
        return std::sqrt(acc);
    }

private:
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double a = std::sqrt(1.0 / double(fan_in));
    for (double& v : t.value) v = rng.uniform(-a, a);
}

} // namespace detail

// Weights uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)], biases zero.
inline ParamSet init_params(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    ParamSet p;
    const std::size_t d = cfg.d, F = cfg.freq_bins, K = cfg.kernel;

    detail::init_uniform(p.add("enc.in_proj.w", {F, d}), F, rng);
    p.add("enc.in_proj.b", {d});
    for (std::size_t i = 0; i < cfg.n_enc_blocks; ++i) {
        const std::string base = "enc.block" + std::to_string(i);
        detail::init_uniform(p.add(base + ".conv.w", {K, d, d}), K * d, rng);
        p.add(base + ".conv.b", {d});
    }
    detail::init_uniform(p.add("f0_proj.w", {2, d}), 2, rng);
    p.add("f0_proj.b", {d});
    detail::init_uniform(p.add("attn.wq", {d, d}), d, rng);
    detail::init_uniform(p.add("attn.wk", {d, d}), d, rng);
    detail::init_uniform(p.add("attn.wv", {d, d}), d, rng);
    detail::init_uniform(p.add("dec.block.conv.w", {K, d, d}), K * d, rng);
    p.add("dec.block.conv.b", {d});
    detail::init_uniform(p.add("dec.out.w", {d, 2 * F}), d, rng);
    p.add("dec.out.b", {2 * F});
    return p;
}

namespace detail {

// 1-D convolution along time, same padding, stride 1.
// in [T, C], w [K, C, O], b [O] -> out [T, O]
inline Matrix conv1d_same(const Matrix& in, const Tensor& w, const Tensor& b) {
    const std::size_t T = in.rows(), C = in.cols();
    const std::size_t K = w.shape[0], O = w.shape[2];
    const std::size_t P = K / 2;
    Matrix out(T, O);
    for (std::size_t t = 0; t < T; ++t) {
        double* orow = out.row(t);
        for (std::size_t o = 0; o < O; ++o) orow[o] = b.value[o];
        for (std::size_t k = 0; k < K; ++k) {
            const long long src = (long long)t + (long long)k - (long long)P;
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

// Accumulates dW/dB into grads and the input gradient into d_in.
inline void conv1d_same_backward(const Matrix& in, Tensor& w, Tensor& b, const Matrix& d_out,
                                 Matrix& d_in) {
    const std::size_t T = in.rows(), C = in.cols();
    const std::size_t K = w.shape[0], O = w.shape[2];
    const std::size_t P = K / 2;
    for (std::size_t t = 0; t < T; ++t) {
        const double* drow = d_out.row(t);
        for (std::size_t o = 0; o < O; ++o) b.grad[o] += drow[o];
        for (std::size_t k = 0; k < K; ++k) {
            const long long src = (long long)t + (long long)k - (long long)P;
            if (src < 0 || src >= (long long)T) continue;
            const double* irow = in.row(std::size_t(src));
            double* dirow = d_in.row(std::size_t(src));
            double* gwk = w.grad.data() + k * C * O;
            const double* wk = w.value.data() + k * C * O;
            for (std::size_t c = 0; c < C; ++c) {
                const double iv = irow[c];
                double acc = 0.0;
                double* gwc = gwk + c * O;
                const double* wc = wk + c * O;
                for (std::size_t o = 0; o < O; ++o) {
                    const double dv = drow[o];
                    gwc[o] += iv * dv;
                    acc += wc[o] * dv;
                }
                dirow[c] += acc;
            }
        }
    }
}

inline void softmax_rows(Matrix& m) {
    for (std::size_t t = 0; t < m.rows(); ++t) {
        double* row = m.row(t);
        double mx = row[0];
        for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] *= inv;
    }
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

} // namespace detail

struct EncoderRecord {
    Matrix X;                      // [T, F] input features
    std::vector<Matrix> block_in;  // input of each residual block
    std::vector<Matrix> block_tanh;
    Matrix H;                      // [T, d]
};

struct AttentionRecord {
    Matrix A;        // [T, T] row-stochastic attention weights
    Matrix H;        // [T, d] input
    Matrix F_emb;    // [T, d] projected F0 features
    Matrix H_tilde;  // [T, d] gated output
    // cached for backward
    Matrix feats, Q, K, V, H_tilde_raw;
    std::vector<std::uint8_t> voiced;
};

struct DecoderRecord {
    Matrix in;         // [T, d]
    Matrix conv_tanh;  // tanh of the conv pre-activation
    Matrix D;          // residual block output
};

struct ModelRecord {
    EncoderRecord enc;
    AttentionRecord attn;
    DecoderRecord dec;
    ComplexSpectrogram S_hat;
    Waveform y_hat;
};

// Encoder input decision: log-magnitude of the reference spectrum. Phase is
// absent from the features, so the decoder has to predict it.
inline Matrix log_magnitude_features(const ComplexSpectrogram& spec) {
    Matrix X(spec.frames(), spec.bins());
    for (std::size_t t = 0; t < spec.frames(); ++t)
        for (std::size_t f = 0; f < spec.bins(); ++f) {
            const double re = spec.real(t, f), im = spec.imag(t, f);
            X(t, f) = std::log(std::sqrt(re * re + im * im) + 1e-5);
        }
    return X;
}

// Input projection F -> d, then n_enc_blocks of conv -> tanh -> residual.
inline Matrix encoder_forward(const Matrix& X, const ParamSet& p, const ModelConfig& cfg,
                              EncoderRecord* rec = nullptr) {
    for (std::size_t i = 0; i < X.size(); ++i)
        if (!std::isfinite(X.data()[i]))
            throw std::invalid_argument("encoder_forward: non-finite input");
    if (X.cols() != cfg.freq_bins) throw std::invalid_argument("encoder_forward: F mismatch");

    const Tensor& w_in = p.at("enc.in_proj.w");
    const Tensor& b_in = p.at("enc.in_proj.b");
    Matrix h(X.rows(), cfg.d);
    for (std::size_t t = 0; t < X.rows(); ++t) {
        const double* xrow = X.row(t);
        double* hrow = h.row(t);
        for (std::size_t j = 0; j < cfg.d; ++j) hrow[j] = b_in.value[j];
        for (std::size_t f = 0; f < cfg.freq_bins; ++f) {
            const double xv = xrow[f];
            if (xv == 0.0) continue;
            const double* wrow = w_in.value.data() + f * cfg.d;
            for (std::size_t j = 0; j < cfg.d; ++j) hrow[j] += xv * wrow[j];
        }
    }

    if (rec) {
        rec->X = X;
        rec->block_in.clear();
        rec->block_tanh.clear();
    }
    for (std::size_t i = 0; i < cfg.n_enc_blocks; ++i) {
        const std::string base = "enc.block" + std::to_string(i);
        Matrix pre = detail::conv1d_same(h, p.at(base + ".conv.w"), p.at(base + ".conv.b"));
        for (std::size_t j = 0; j < pre.size(); ++j) pre.data()[j] = std::tanh(pre.data()[j]);
        if (rec) {
            rec->block_in.push_back(h);
            rec->block_tanh.push_back(pre);
        }
        h = detail::add(h, pre);
    }
    if (rec) rec->H = h;
    return h;
}

// Eq.-style scaled dot-product attention with F0-embedding keys and a hard
// voiced gate: unvoiced rows pass through untouched.
inline AttentionRecord harmonic_attention(const Matrix& H, const Matrix& feats,
                                          const std::vector<std::uint8_t>& voiced,
                                          const ParamSet& p) {
    const std::size_t T = H.rows(), d = H.cols();
    if (feats.rows() != T || feats.cols() != 2)
        throw std::invalid_argument("harmonic_attention: feats must be [T, 2]");
    if (voiced.size() != T) throw std::invalid_argument("harmonic_attention: voiced length mismatch");

    AttentionRecord rec;
    rec.H = H;
    rec.feats = feats;
    rec.voiced = voiced;

    const Tensor& wf = p.at("f0_proj.w");
    const Tensor& bf = p.at("f0_proj.b");
    rec.F_emb = Matrix(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        double* row = rec.F_emb.row(t);
        const double f0v = feats(t, 0), f1v = feats(t, 1);
        for (std::size_t j = 0; j < d; ++j)
            row[j] = bf.value[j] + f0v * wf.value[j] + f1v * wf.value[d + j];
    }

    auto project = [&](const Matrix& in, const Tensor& w) {
        Matrix out(T, d);
        for (std::size_t t = 0; t < T; ++t) {
            const double* irow = in.row(t);
            double* orow = out.row(t);
            for (std::size_t c = 0; c < d; ++c) {
                const double iv = irow[c];
                if (iv == 0.0) continue;
                const double* wrow = w.value.data() + c * d;
                for (std::size_t j = 0; j < d; ++j) orow[j] += iv * wrow[j];
            }
        }
        return out;
    };
    rec.Q = project(H, p.at("attn.wq"));
    rec.K = project(rec.F_emb, p.at("attn.wk"));
    rec.V = project(H, p.at("attn.wv"));

    rec.A = matmul_a_bt(rec.Q, rec.K);
    const double scale = 1.0 / std::sqrt(double(d));
    for (std::size_t i = 0; i < rec.A.size(); ++i) rec.A.data()[i] *= scale;
    detail::softmax_rows(rec.A);

    rec.H_tilde_raw = matmul(rec.A, rec.V);
    rec.H_tilde = Matrix(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        const double* src = voiced[t] ? rec.H_tilde_raw.row(t) : H.row(t);
        double* dst = rec.H_tilde.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    return rec;
}

// One conv-tanh-residual block, then affine d -> 2F; first F columns are
// the real plane, the rest the imaginary plane.
inline ComplexSpectrogram decoder_forward(const Matrix& H_tilde, const ParamSet& p,
                                          const ModelConfig& cfg, const StftConfig& stft_cfg,
                                          DecoderRecord* rec = nullptr) {
    const std::size_t T = H_tilde.rows(), d = H_tilde.cols(), F = cfg.freq_bins;
    Matrix pre = detail::conv1d_same(H_tilde, p.at("dec.block.conv.w"), p.at("dec.block.conv.b"));
    for (std::size_t j = 0; j < pre.size(); ++j) pre.data()[j] = std::tanh(pre.data()[j]);
    Matrix D = detail::add(H_tilde, pre);
    if (rec) {
        rec->in = H_tilde;
        rec->conv_tanh = pre;
        rec->D = D;
    }

    const Tensor& w = p.at("dec.out.w");
    const Tensor& b = p.at("dec.out.b");
    ComplexSpectrogram out{Matrix(T, F), Matrix(T, F), stft_cfg};
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> yrow(2 * F);
        for (std::size_t j = 0; j < 2 * F; ++j) yrow[j] = b.value[j];
        const double* drow = D.row(t);
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = drow[c];
            if (dv == 0.0) continue;
            const double* wrow = w.value.data() + c * 2 * F;
            for (std::size_t j = 0; j < 2 * F; ++j) yrow[j] += dv * wrow[j];
        }
        for (std::size_t f = 0; f < F; ++f) {
            out.real(t, f) = yrow[f];
            out.imag(t, f) = yrow[F + f];
        }
    }
    return out;
}

// encoder -> f0 features -> harmonic attention -> decoder -> istft
inline ModelRecord model_forward(const Matrix& y_features, const F0Contour& contour,
                                 const ParamSet& p, const ModelConfig& cfg,
                                 const StftConfig& stft_cfg, const PitchConfig& pcfg,
                                 std::size_t out_len) {
    if (contour.size() != y_features.rows())
        throw std::invalid_argument("model_forward: contour/features frame mismatch");
    ModelRecord rec;
    encoder_forward(y_features, p, cfg, &rec.enc);
    const Matrix feats = f0_features(contour, pcfg);
    rec.attn = harmonic_attention(rec.enc.H, feats, contour.voiced, p);
    rec.S_hat = decoder_forward(rec.attn.H_tilde, p, cfg, stft_cfg, &rec.dec);
    rec.y_hat = istft(rec.S_hat, out_len);
    return rec;
}

// Reverse-mode gradients of the full composition, given dL/dS_hat. Gradient
// buffers are overwritten unless accumulate is set.
inline void model_backward(const ModelRecord& rec, const Matrix& d_real, const Matrix& d_imag,
                           ParamSet& p, const ModelConfig& cfg, bool accumulate = false) {
    const std::size_t T = rec.attn.H.rows(), d = cfg.d, F = cfg.freq_bins;
    if (d_real.rows() != T || d_real.cols() != F || !d_real.same_shape(d_imag))
        throw std::logic_error("model_backward: gradient shape does not match record");
    if (rec.dec.D.rows() != T || rec.enc.H.rows() != T)
        throw std::logic_error("model_backward: stale forward record");
    if (!accumulate) p.zero_grads();

    // ---- decoder affine ----
    Tensor& w_out = p.at("dec.out.w");
    Tensor& b_out = p.at("dec.out.b");
    Matrix dD(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> dy(2 * F);
        for (std::size_t f = 0; f < F; ++f) {
            dy[f] = d_real(t, f);
            dy[F + f] = d_imag(t, f);
        }
        for (std::size_t j = 0; j < 2 * F; ++j) b_out.grad[j] += dy[j];
        const double* drow = rec.dec.D.row(t);
        double* ddrow = dD.row(t);
        for (std::size_t c = 0; c < d; ++c) {
            double* gw = w_out.grad.data() + c * 2 * F;
            const double* wv = w_out.value.data() + c * 2 * F;
            const double dv = drow[c];
            double acc = 0.0;
            for (std::size_t j = 0; j < 2 * F; ++j) {
                gw[j] += dv * dy[j];
                acc += wv[j] * dy[j];
            }
            ddrow[c] = acc;
        }
    }

    // ---- decoder conv block ----
    Matrix dHt = dD; // residual path
    {
        Matrix dtanh(T, d);
        for (std::size_t i = 0; i < dtanh.size(); ++i) {
            const double th = rec.dec.conv_tanh.data()[i];
            dtanh.data()[i] = dD.data()[i] * (1.0 - th * th);
        }
        detail::conv1d_same_backward(rec.dec.in, p.at("dec.block.conv.w"),
                                     p.at("dec.block.conv.b"), dtanh, dHt);
    }

    // ---- attention ----
    const AttentionRecord& a = rec.attn;
    Matrix dR(T, d), dH(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        const double* src = dHt.row(t);
        double* dst = a.voiced[t] ? dR.row(t) : dH.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    Matrix dA = matmul_a_bt(dR, a.V);
    Matrix dV = matmul_at_b(a.A, dR);
    Matrix dLgt(T, T);
    for (std::size_t t = 0; t < T; ++t) {
        const double* arow = a.A.row(t);
        const double* darow = dA.row(t);
        double dot = 0.0;
        for (std::size_t j = 0; j < T; ++j) dot += arow[j] * darow[j];
        double* out = dLgt.row(t);
        for (std::size_t j = 0; j < T; ++j) out[j] = arow[j] * (darow[j] - dot);
    }
    const double scale = 1.0 / std::sqrt(double(d));
    for (std::size_t i = 0; i < dLgt.size(); ++i) dLgt.data()[i] *= scale;
    Matrix dQ = matmul(dLgt, a.K);
    Matrix dK = matmul_at_b(dLgt, a.Q);

    Tensor& wq = p.at("attn.wq");
    Tensor& wk = p.at("attn.wk");
    Tensor& wv = p.at("attn.wv");
    auto accum_proj = [&](const Matrix& in, const Matrix& dout, Tensor& w, Matrix* din) {
        // dW += in^T dout ; din += dout W^T
        const Matrix dw = matmul_at_b(in, dout);
        for (std::size_t i = 0; i < dw.size(); ++i) w.grad[i] += dw.data()[i];
        if (din) {
            for (std::size_t t = 0; t < dout.rows(); ++t) {
                const double* drow = dout.row(t);
                double* irow = din->row(t);
                for (std::size_t c = 0; c < d; ++c) {
                    const double* wrow = w.value.data() + c * d;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < d; ++j) acc += wrow[j] * drow[j];
                    irow[c] += acc;
                }
            }
        }
    };
    accum_proj(a.H, dQ, wq, &dH);
    Matrix dFemb(T, d);
    accum_proj(a.F_emb, dK, wk, &dFemb);
    accum_proj(a.H, dV, wv, &dH);

    Tensor& wf = p.at("f0_proj.w");
    Tensor& bf = p.at("f0_proj.b");
    for (std::size_t t = 0; t < T; ++t) {
        const double* drow = dFemb.row(t);
        const double f0v = a.feats(t, 0), f1v = a.feats(t, 1);
        for (std::size_t j = 0; j < d; ++j) {
            wf.grad[j] += f0v * drow[j];
            wf.grad[d + j] += f1v * drow[j];
            bf.grad[j] += drow[j];
        }
    }

    // ---- encoder blocks, reversed ----
    for (std::size_t i = cfg.n_enc_blocks; i-- > 0;) {
        const std::string base = "enc.block" + std::to_string(i);
        Matrix dtanh(T, d);
        for (std::size_t j = 0; j < dtanh.size(); ++j) {
            const double th = rec.enc.block_tanh[i].data()[j];
            dtanh.data()[j] = dH.data()[j] * (1.0 - th * th);
        }
        detail::conv1d_same_backward(rec.enc.block_in[i], p.at(base + ".conv.w"),
                                     p.at(base + ".conv.b"), dtanh, dH);
    }

    // ---- input projection ----
    Tensor& w_in = p.at("enc.in_proj.w");
    Tensor& b_in = p.at("enc.in_proj.b");
    for (std::size_t t = 0; t < T; ++t) {
        const double* xrow = rec.enc.X.row(t);
        const double* drow = dH.row(t);
        for (std::size_t j = 0; j < d; ++j) b_in.grad[j] += drow[j];
        for (std::size_t f = 0; f < cfg.freq_bins; ++f) {
            const double xv = xrow[f];
            if (xv == 0.0) continue;
            double* gw = w_in.grad.data() + f * d;
            for (std::size_t j = 0; j < d; ++j) gw[j] += xv * drow[j];
        }
    }
}

} // namespace phvc
