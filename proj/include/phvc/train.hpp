#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "phvc/losses.hpp"
#include "phvc/model.hpp"
#include "phvc/optim.hpp"
#include "phvc/pitch.hpp"
#include "phvc/rng.hpp"
#include "phvc/stft.hpp"

namespace phvc {

struct SynthClip {
    Waveform waveform;
    F0Contour true_f0;
    std::vector<std::pair<std::size_t, std::size_t>> voiced_spans; // [start, end) in frames
};

// Deterministic synthetic corpus: harmonic glides (4-8 harmonics, 1/k decay,
// slow amplitude modulation) alternating with band-limited noise spans.
// Instantaneous F0 is recorded analytically per STFT frame.
inline std::vector<SynthClip> synth_dataset(std::size_t n_clips, double dur, std::uint64_t seed,
                                            const StftConfig& stft_cfg = StftConfig{}) {
    if (n_clips == 0) throw std::invalid_argument("synth_dataset: n_clips must be >= 1");
    if (dur < 0.25) throw std::invalid_argument("synth_dataset: dur must be >= 0.25 s");
    stft_cfg.validate();
    const double sr = stft_cfg.sample_rate;
    const std::size_t n = std::size_t(std::llround(dur * sr));
    const double two_pi = 6.283185307179586476925287;

    Rng master(seed);
    std::vector<SynthClip> clips;
    clips.reserve(n_clips);
    for (std::size_t ci = 0; ci < n_clips; ++ci) {
        Rng rng = master.fork(ci);
        SynthClip clip;
        clip.waveform.sample_rate = sr;
        clip.waveform.samples.assign(n, 0.0);
        std::vector<double> inst_f0(n, 0.0);

        bool voiced = rng.below(2) == 0;
        std::size_t pos = 0;
        std::vector<std::pair<std::size_t, std::size_t>> sample_spans;
        while (pos < n) {
            const double span_s = voiced ? rng.uniform(0.20, 0.35) : rng.uniform(0.10, 0.18);
            std::size_t span = std::size_t(std::llround(span_s * sr));
            if (n - pos < span + std::size_t(0.05 * sr)) span = n - pos; // absorb the tail
            const std::size_t end = pos + span;

            if (voiced) {
                const double f_start = rng.uniform(120.0, 320.0);
                const double f_end =
                    std::clamp(f_start + rng.uniform(-25.0, 25.0), 120.0, 320.0);
                const std::size_t n_harm = 4 + rng.below(5);
                const double peak = rng.uniform(0.15, 0.25);
                const double am_depth = rng.uniform(0.15, 0.30);
                const double am_rate = rng.uniform(2.5, 6.0);
                const double am_phase = rng.uniform(0.0, two_pi);
                std::vector<double> harm_phase(n_harm);
                for (double& ph : harm_phase) ph = rng.uniform(0.0, two_pi);
                double h_sum = 0.0;
                for (std::size_t k = 1; k <= n_harm; ++k) h_sum += 1.0 / double(k);

                const double span_t = double(span) / sr;
                for (std::size_t i = pos; i < end; ++i) {
                    const double tau = double(i - pos) / sr;
                    const double f = f_start + (f_end - f_start) * tau / span_t;
                    const double phi = two_pi * (f_start * tau +
                                                 0.5 * (f_end - f_start) * tau * tau / span_t);
                    double x = 0.0;
                    for (std::size_t k = 1; k <= n_harm; ++k)
                        x += peak / (double(k) * h_sum) *
                             std::sin(double(k) * phi + harm_phase[k - 1]);
                    const double am = (1.0 + am_depth * std::sin(two_pi * am_rate * tau + am_phase)) /
                                      (1.0 + am_depth);
                    const double fade = std::min({1.0, tau / 0.005, (span_t - tau) / 0.005});
                    clip.waveform.samples[i] = x * am * std::max(fade, 0.0);
                    inst_f0[i] = f;
                }
                sample_spans.emplace_back(pos, end);
            } else {
                double prev2 = rng.uniform(-1.0, 1.0), prev1 = rng.uniform(-1.0, 1.0);
                for (std::size_t i = pos; i < end; ++i) {
                    const double u = rng.uniform(-1.0, 1.0);
                    clip.waveform.samples[i] = 0.1 * (u + prev1 + prev2) / 3.0;
                    prev2 = prev1;
                    prev1 = u;
                }
            }
            pos = end;
            voiced = !voiced;
        }

        const std::size_t n_frames = stft_num_frames(n, stft_cfg);
        clip.true_f0.hop = stft_cfg.hop;
        clip.true_f0.sample_rate = sr;
        clip.true_f0.f0_hz.assign(n_frames, 0.0);
        clip.true_f0.voiced.assign(n_frames, 0);
        for (std::size_t t = 0; t < n_frames; ++t) {
            const std::size_t center = std::min(t * stft_cfg.hop, n - 1);
            if (inst_f0[center] > 0.0) {
                clip.true_f0.f0_hz[t] = inst_f0[center];
                clip.true_f0.voiced[t] = 1;
            }
        }
        for (const auto& [s0, s1] : sample_spans) {
            const std::size_t t0 = (s0 + stft_cfg.hop - 1) / stft_cfg.hop;
            const std::size_t t1 = std::min((s1 - 1) / stft_cfg.hop + 1, n_frames);
            if (t0 < t1) clip.voiced_spans.emplace_back(t0, t1);
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------
struct TrainResult {
    ParamSet params;
    OptState opt_state;
    std::vector<LossReport> history;
    ParamSet disc_params;   // populated only when lambda_adv > 0
    OptState disc_state;
};

namespace detail {

struct ClipCache {
    F0Contour contour; // full-clip contour
    // populated when the whole clip is one crop
    bool whole = false;
    Matrix X;
    ComplexSpectrogram S_ref;
    MrStftRefs mr_refs;
};

inline F0Contour slice_contour(const F0Contour& full, std::size_t frame0, std::size_t n_frames) {
    F0Contour c;
    c.hop = full.hop;
    c.sample_rate = full.sample_rate;
    c.f0_hz.assign(full.f0_hz.begin() + frame0, full.f0_hz.begin() + frame0 + n_frames);
    c.voiced.assign(full.voiced.begin() + frame0, full.voiced.begin() + frame0 + n_frames);
    return c;
}

} // namespace detail

// Seeded batches of fixed-length crops; forward, Eq.-4 objective, backward,
// AdamW on the generator, then one LSGAN discriminator step per generator
// step when the adversarial weight is enabled.
inline TrainResult train(const std::vector<SynthClip>& data, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const StftConfig& stft_cfg = StftConfig{},
                         const PitchConfig& pcfg = PitchConfig{},
                         const MrStftConfig& mr_cfg = MrStftConfig{}) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    mcfg.validate();
    tcfg.validate();
    stft_cfg.validate();
    mr_cfg.validate(stft_cfg.sample_rate);
    if (mcfg.freq_bins != stft_cfg.bins())
        throw std::invalid_argument("train: model freq_bins must match stft config");

    const double sr = stft_cfg.sample_rate;
    std::size_t crop_len = std::size_t(std::llround(0.5 * sr));
    for (const SynthClip& c : data) crop_len = std::min(crop_len, c.waveform.samples.size());

    std::vector<detail::ClipCache> cache(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        cache[i].contour = estimate_f0(data[i].waveform, stft_cfg, pcfg);
        if (data[i].waveform.samples.size() == crop_len) {
            cache[i].whole = true;
            cache[i].S_ref = stft(data[i].waveform, stft_cfg);
            cache[i].X = log_magnitude_features(cache[i].S_ref);
            cache[i].mr_refs = mr_stft_prepare(data[i].waveform, mr_cfg);
        }
    }

    TrainResult res;
    res.params = init_params(mcfg);
    res.opt_state = OptState::for_params(res.params);
    const bool use_disc = tcfg.weights.lambda_adv > 0.0;
    if (use_disc) {
        res.disc_params = init_disc_params(tcfg.seed ^ 0xD15CD15Cull);
        res.disc_state = OptState::for_params(res.disc_params);
    }

    Rng batch_rng(tcfg.seed ^ 0xBA7C4E5Dull);
    const std::size_t n_crop_frames = stft_num_frames(crop_len, stft_cfg);

    for (std::size_t step = 0; step < tcfg.steps; ++step) {
        res.params.zero_grads();
        double l_stft = 0.0, l_phase = 0.0, l_adv_g = 0.0, l_adv_d = 0.0;
        std::vector<std::vector<double>> fake_windows, real_windows;

        for (std::size_t b = 0; b < tcfg.batch_size; ++b) {
            const std::size_t ci = std::size_t(batch_rng.below(data.size()));
            const SynthClip& clip = data[ci];
            const std::size_t clip_len = clip.waveform.samples.size();
            std::size_t start = 0;
            if (!cache[ci].whole) {
                const std::size_t max_hops = (clip_len - crop_len) / stft_cfg.hop;
                start = stft_cfg.hop * std::size_t(batch_rng.below(max_hops + 1));
            }

            Matrix X;
            ComplexSpectrogram S_ref;
            MrStftRefs mr_refs;
            F0Contour contour;
            Waveform y_ref;
            y_ref.sample_rate = sr;
            if (cache[ci].whole) {
                X = cache[ci].X;
                S_ref = cache[ci].S_ref;
                mr_refs = cache[ci].mr_refs;
                contour = cache[ci].contour;
                contour.f0_hz.resize(n_crop_frames);
                contour.voiced.resize(n_crop_frames);
                y_ref.samples = clip.waveform.samples;
            } else {
                y_ref.samples.assign(clip.waveform.samples.begin() + start,
                                     clip.waveform.samples.begin() + start + crop_len);
                S_ref = stft(y_ref, stft_cfg);
                X = log_magnitude_features(S_ref);
                mr_refs = mr_stft_prepare(y_ref, mr_cfg);
                contour = detail::slice_contour(cache[ci].contour, start / stft_cfg.hop,
                                                n_crop_frames);
            }

            const ModelRecord rec =
                model_forward(X, contour, res.params, mcfg, stft_cfg, pcfg, crop_len);
            GeneratorObjective obj =
                generator_objective(rec.S_hat, rec.y_hat, S_ref, mr_refs, tcfg.weights,
                                    use_disc ? &res.disc_params : nullptr);
            model_backward(rec, obj.d_real, obj.d_imag, res.params, mcfg, /*accumulate=*/true);
            l_stft += obj.report.l_stft;
            l_phase += obj.report.l_phase;
            l_adv_g += obj.report.l_adv_g;
            if (use_disc) {
                fake_windows.push_back(rec.y_hat.samples);
                real_windows.push_back(std::move(y_ref.samples));
            }
        }

        const double inv_b = 1.0 / double(tcfg.batch_size);
        l_stft *= inv_b;
        l_phase *= inv_b;
        l_adv_g *= inv_b;
        res.params.scale_grads(inv_b);
        clip_grad_norm(res.params, tcfg.grad_clip);
        adamw_step(res.params, res.opt_state, tcfg);

        if (use_disc) {
            res.disc_params.zero_grads();
            for (std::size_t b = 0; b < fake_windows.size(); ++b) {
                DiscRecord rec_r, rec_f;
                const std::vector<double> sr_scores =
                    disc_forward(real_windows[b], res.disc_params, &rec_r);
                const std::vector<double> sf_scores =
                    disc_forward(fake_windows[b], res.disc_params, &rec_f);
                const auto [ld, lg] = adv_losses(sr_scores, sf_scores);
                (void)lg;
                l_adv_d += ld;
                std::vector<double> dr(sr_scores.size()), df(sf_scores.size());
                for (std::size_t j = 0; j < dr.size(); ++j)
                    dr[j] = 2.0 * (sr_scores[j] - 1.0) / double(dr.size());
                for (std::size_t j = 0; j < df.size(); ++j)
                    df[j] = 2.0 * sf_scores[j] / double(df.size());
                disc_backward(rec_r, dr, res.disc_params, /*accum_params=*/true);
                disc_backward(rec_f, df, res.disc_params, /*accum_params=*/true);
            }
            l_adv_d *= inv_b;
            res.disc_params.scale_grads(inv_b);
            clip_grad_norm(res.disc_params, tcfg.grad_clip);
            adamw_step(res.disc_params, res.disc_state, tcfg);
        }

        const LossReport report = total_loss(l_stft, l_phase, l_adv_g, l_adv_d, tcfg.weights);
        res.history.push_back(report);
        if (!std::isfinite(report.total) || report.total > 1e4)
            throw TrainingDivergedError("train: loss diverged at step " + std::to_string(step) +
                                        " (total = " + std::to_string(report.total) + ")");
    }
    return res;
}

inline void write_loss_history(const std::string& path, const std::vector<LossReport>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "step,l_stft,l_phase,l_adv_g,l_adv_d,total\n";
    char buf[160];
    for (std::size_t i = 0; i < history.size(); ++i) {
        const LossReport& r = history[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", i + 1, r.l_stft,
                      r.l_phase, r.l_adv_g, r.l_adv_d, r.total);
        out << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "PHVC", version u32 LE, tensor count u32 LE; per
// tensor: name length u16 + UTF-8 name, rank u8, dims u32 LE, payload as
// float32 LE row-major. Optimizer moments ride along as "opt.*" tensors.
// ---------------------------------------------------------------------------
enum class CheckpointErrorCode { BadMagic, BadVersion, Truncated, DuplicateTensor, Malformed, Io };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}
    CheckpointErrorCode code() const noexcept { return code_; }

private:
    CheckpointErrorCode code_;
};

namespace detail {

inline void ck_write_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {char(v & 0xFF), char(v >> 8 & 0xFF), char(v >> 16 & 0xFF), char(v >> 24 & 0xFF)};
    out.write(b, 4);
}

inline void ck_write_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {char(v & 0xFF), char(v >> 8 & 0xFF)};
    out.write(b, 2);
}

inline void ck_write_tensor(std::ostream& out, const std::string& name,
                            const std::vector<std::size_t>& shape,
                            const std::vector<double>& value) {
    ck_write_u16(out, std::uint16_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    out.put(char(shape.size()));
    for (std::size_t d : shape) ck_write_u32(out, std::uint32_t(d));
    for (double v : value) {
        const float f = float(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        ck_write_u32(out, u);
    }
}

struct CkReader {
    std::ifstream in;
    std::string context = "header";

    void read(char* dst, std::size_t n) {
        in.read(dst, std::streamsize(n));
        if (std::size_t(in.gcount()) != n)
            throw CheckpointError(CheckpointErrorCode::Truncated,
                                  "checkpoint truncated while reading " + context);
    }
    std::uint32_t u32() {
        unsigned char b[4];
        read(reinterpret_cast<char*>(b), 4);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    }
    std::uint16_t u16() {
        unsigned char b[2];
        read(reinterpret_cast<char*>(b), 2);
        return std::uint16_t(b[0] | b[1] << 8);
    }
    std::uint8_t u8() {
        unsigned char b;
        read(reinterpret_cast<char*>(&b), 1);
        return b;
    }
};

} // namespace detail

inline void save_checkpoint(const ParamSet& p, const OptState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointErrorCode::Io, "cannot write " + path);
    out.write("PHVC", 4);
    detail::ck_write_u32(out, 1); // format version
    const std::uint32_t count = std::uint32_t(3 * p.tensors().size() + 1);
    detail::ck_write_u32(out, count);
    for (const Tensor& t : p.tensors()) detail::ck_write_tensor(out, t.name, t.shape, t.value);
    for (std::size_t i = 0; i < p.tensors().size(); ++i) {
        const Tensor& t = p.tensors()[i];
        detail::ck_write_tensor(out, "opt.m." + t.name, t.shape, state.m[i]);
        detail::ck_write_tensor(out, "opt.v." + t.name, t.shape, state.v[i]);
    }
    detail::ck_write_tensor(out, "opt.step", {1}, {double(state.step)});
    if (!out) throw CheckpointError(CheckpointErrorCode::Io, "write failed for " + path);
}

inline std::pair<ParamSet, OptState> load_checkpoint(const std::string& path) {
    detail::CkReader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw CheckpointError(CheckpointErrorCode::Io, "cannot open " + path);

    char magic[4];
    r.context = "magic";
    r.read(magic, 4);
    if (std::memcmp(magic, "PHVC", 4) != 0)
        throw CheckpointError(CheckpointErrorCode::BadMagic, "bad checkpoint magic");
    r.context = "version";
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw CheckpointError(CheckpointErrorCode::BadVersion,
                              "unsupported checkpoint version " + std::to_string(version));
    r.context = "tensor count";
    const std::uint32_t count = r.u32();

    struct Raw {
        std::string name;
        std::vector<std::size_t> shape;
        std::vector<double> value;
    };
    std::vector<Raw> raws;
    std::unordered_map<std::string, std::size_t> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        Raw raw;
        r.context = "tensor name";
        const std::uint16_t name_len = r.u16();
        raw.name.resize(name_len);
        r.read(raw.name.data(), name_len);
        r.context = "tensor " + raw.name;
        if (seen.count(raw.name))
            throw CheckpointError(CheckpointErrorCode::DuplicateTensor,
                                  "duplicate tensor name " + raw.name);
        const std::uint8_t rank = r.u8();
        std::size_t n = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            raw.shape.push_back(r.u32());
            n *= raw.shape.back();
        }
        raw.value.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const std::uint32_t u = r.u32();
            float f;
            std::memcpy(&f, &u, 4);
            raw.value[j] = double(f);
        }
        seen[raw.name] = raws.size();
        raws.push_back(std::move(raw));
    }

    ParamSet p;
    for (const Raw& raw : raws) {
        if (raw.name.rfind("opt.", 0) == 0) continue;
        Tensor& t = p.add(raw.name, raw.shape);
        t.value = raw.value;
    }
    if (p.tensors().empty())
        throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint has no model tensors");

    OptState state = OptState::for_params(p);
    for (std::size_t i = 0; i < p.tensors().size(); ++i) {
        const std::string& name = p.tensors()[i].name;
        const auto im = seen.find("opt.m." + name);
        const auto iv = seen.find("opt.v." + name);
        if (im == seen.end() || iv == seen.end())
            throw CheckpointError(CheckpointErrorCode::Malformed,
                                  "missing optimizer state for tensor " + name);
        state.m[i] = raws[im->second].value;
        state.v[i] = raws[iv->second].value;
    }
    const auto istep = seen.find("opt.step");
    if (istep == seen.end() || raws[istep->second].value.size() != 1)
        throw CheckpointError(CheckpointErrorCode::Malformed, "missing optimizer step counter");
    state.step = std::uint64_t(raws[istep->second].value[0]);
    return {std::move(p), std::move(state)};
}

} // namespace phvc
