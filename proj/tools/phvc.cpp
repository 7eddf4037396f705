// phvc - prosody-guided harmonic-attention vocoder toolkit
//
// Subcommands: synth-data, train, vocode, anchor, eval.
// Exit codes: 0 success, 2 usage/config error, 3 runtime abort.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phvc/config.hpp"
#include "phvc/eval.hpp"
#include "phvc/gradcheck.hpp"
#include "phvc/train.hpp"
#include "phvc/wav.hpp"

namespace fs = std::filesystem;
using namespace phvc;

namespace {

struct CliOptions {
    bool verbose = false;
};

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return load_run_config(path);
}

ModelConfig infer_model_config(const ParamSet& p) {
    ModelConfig cfg;
    cfg.d = p.at("attn.wq").shape[0];
    cfg.kernel = p.at("enc.block0.conv.w").shape[0];
    cfg.freq_bins = p.at("dec.out.w").shape[1] / 2;
    cfg.n_enc_blocks = 0;
    while (p.has("enc.block" + std::to_string(cfg.n_enc_blocks) + ".conv.w")) ++cfg.n_enc_blocks;
    return cfg;
}

int cmd_synth_data(const std::string& out_dir, std::size_t clips, double dur, std::uint64_t seed,
                   const CliOptions& opts) {
    fs::create_directories(out_dir);
    const StftConfig stft_cfg;
    const std::vector<SynthClip> data = synth_dataset(clips, dur, seed, stft_cfg);
    char name[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::snprintf(name, sizeof(name), "clip_%04zu", i);
        const std::string base = (fs::path(out_dir) / name).string();
        write_wav(base + ".wav", data[i].waveform, WavSampleFormat::Float32);
        write_f0_csv(base + ".f0.csv", data[i].true_f0);
        if (opts.verbose)
            std::cout << "wrote " << base << ".wav (" << data[i].waveform.samples.size()
                      << " samples)\n";
    }
    std::cout << "synth-data: " << data.size() << " clips in " << out_dir << "\n";
    return 0;
}

std::vector<fs::path> list_wavs(const std::string& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_ckpt, long steps_override, const CliOptions& opts) {
    RunConfig cfg = load_run_config(config_path);
    if (steps_override >= 0) cfg.train.steps = std::size_t(steps_override);

    const std::vector<fs::path> wavs = list_wavs(data_dir);
    if (wavs.empty()) throw ConfigError("train: no .wav files in " + data_dir);
    std::vector<SynthClip> data;
    for (const fs::path& p : wavs) {
        SynthClip clip;
        clip.waveform = read_wav(p.string());
        if (clip.waveform.sample_rate != cfg.stft.sample_rate)
            throw ConfigError("train: " + p.filename().string() + " has sample rate " +
                              std::to_string(int(clip.waveform.sample_rate)) + ", config wants " +
                              std::to_string(int(cfg.stft.sample_rate)));
        data.push_back(std::move(clip));
    }
    if (opts.verbose)
        std::cout << "train: " << data.size() << " clips, " << cfg.train.steps << " steps\n";

    const TrainResult result = train(data, cfg.model, cfg.train, cfg.stft, cfg.pitch, cfg.mrstft);
    save_checkpoint(result.params, result.opt_state, out_ckpt);
    const fs::path history_path = fs::path(out_ckpt).parent_path() / "loss_history.csv";
    write_loss_history(history_path.string(), result.history);

    if (!result.history.empty()) {
        const LossReport& r = result.history.back();
        std::printf("final: l_stft=%.6f l_phase=%.6f l_adv_g=%.6f l_adv_d=%.6f total=%.6f\n",
                    r.l_stft, r.l_phase, r.l_adv_g, r.l_adv_d, r.total);
    } else {
        std::cout << "final: no steps run; checkpoint equals initialization\n";
    }
    std::cout << "checkpoint: " << out_ckpt << "\n";
    return 0;
}

int cmd_vocode(const std::string& ckpt_path, const std::string& in_path,
               const std::string& out_path, const std::string& config_path,
               const CliOptions& opts) {
    const RunConfig cfg = load_config_or_default(config_path);
    auto [params, opt_state] = load_checkpoint(ckpt_path);
    (void)opt_state;
    const ModelConfig mcfg = infer_model_config(params);
    if (mcfg.freq_bins != cfg.stft.bins())
        throw ConfigError("vocode: checkpoint bins do not match stft config");

    const Waveform y = read_wav(in_path);
    if (y.sample_rate != cfg.stft.sample_rate)
        throw ConfigError("vocode: input sample rate " + std::to_string(int(y.sample_rate)) +
                          " does not match config " + std::to_string(int(cfg.stft.sample_rate)) +
                          " (resampling is out of scope)");

    const ComplexSpectrogram S = stft(y, cfg.stft);
    const Matrix X = log_magnitude_features(S);
    const F0Contour contour = estimate_f0(y, cfg.stft, cfg.pitch);
    const ModelRecord rec =
        model_forward(X, contour, params, mcfg, cfg.stft, cfg.pitch, y.samples.size());
    write_wav(out_path, rec.y_hat, WavSampleFormat::Float32);
    if (opts.verbose)
        std::cout << "vocode: " << rec.S_hat.frames() << " frames, " << rec.y_hat.samples.size()
                  << " samples\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_anchor(const std::string& in_path, const std::string& out_path, std::size_t iters,
               std::uint64_t seed, const std::string& config_path, const CliOptions& opts) {
    const RunConfig cfg = load_config_or_default(config_path);
    const Waveform y = read_wav(in_path);
    if (y.sample_rate != cfg.stft.sample_rate)
        throw ConfigError("anchor: input sample rate does not match config");
    const ComplexSpectrogram S = stft(y, cfg.stft);
    Matrix mag(S.frames(), S.bins());
    for (std::size_t j = 0; j < mag.size(); ++j)
        mag.data()[j] = std::sqrt(S.real.data()[j] * S.real.data()[j] +
                                  S.imag.data()[j] * S.imag.data()[j]);
    const GriffinLimResult gl = griffin_lim(mag, cfg.stft, iters, seed, y.samples.size());
    write_wav(out_path, gl.waveform, WavSampleFormat::Float32);
    if (opts.verbose)
        for (std::size_t i = 0; i < gl.sc_trace.size(); ++i)
            std::printf("iter %zu: spectral convergence %.9f\n", i + 1, gl.sc_trace[i]);
    if (!gl.sc_trace.empty())
        std::printf("final spectral convergence: %.9f\n", gl.sc_trace.back());
    else
        std::cout << "no refinement iterations\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& est_path, const std::string& out_csv,
             const std::string& config_path, const CliOptions& opts) {
    const RunConfig cfg = load_config_or_default(config_path);

    std::vector<std::pair<std::string, std::pair<std::string, std::string>>> pairs;
    std::vector<std::string> skipped;
    if (fs::is_directory(ref_path) || fs::is_directory(est_path)) {
        if (!fs::is_directory(ref_path) || !fs::is_directory(est_path))
            throw ConfigError("eval: --ref and --est must both be files or both directories");
        std::map<std::string, fs::path> est_by_name;
        for (const fs::path& p : list_wavs(est_path)) est_by_name[p.filename().string()] = p;
        for (const fs::path& p : list_wavs(ref_path)) {
            const auto it = est_by_name.find(p.filename().string());
            if (it == est_by_name.end()) {
                skipped.push_back(p.filename().string() + " (no matching estimate)");
                continue;
            }
            pairs.push_back({p.stem().string(), {p.string(), it->second.string()}});
            est_by_name.erase(it);
        }
        for (const auto& [name, p] : est_by_name)
            skipped.push_back(name + " (no matching reference)");
    } else {
        pairs.push_back({fs::path(ref_path).stem().string(), {ref_path, est_path}});
    }

    std::ofstream csv(out_csv);
    if (!csv) throw std::runtime_error("eval: cannot write " + out_csv);
    csv << "utt_id,f0_rmse_hz,vuv_error_pct,mcd_db,n_frames\n";
    const fs::path out_dir = fs::path(out_csv).parent_path();

    double sum_rmse = 0.0, sum_vuv = 0.0, sum_mcd = 0.0;
    std::size_t n_ok = 0;
    for (const auto& [utt, io] : pairs) {
        try {
            const Waveform ref = read_wav(io.first);
            const Waveform est = read_wav(io.second);
            if (ref.sample_rate != cfg.stft.sample_rate)
                throw ConfigError("sample rate mismatch with config");
            const MetricsReport rep = evaluate_pair(ref, est, cfg.stft, cfg.pitch, cfg.n_mels);
            char row[160];
            std::snprintf(row, sizeof(row), "%s,%.6f,%.6f,%.6f,%zu", utt.c_str(), rep.f0_rmse_hz,
                          rep.vuv_error_pct, rep.mcd_db, rep.n_frames_compared);
            csv << row << '\n';
            std::ofstream res((out_dir / ("residual_" + utt + ".csv")).string());
            res << "frame,residual\n";
            for (std::size_t t = 0; t < rep.residual_mel.size(); ++t)
                res << t << ',' << rep.residual_mel[t] << '\n';
            sum_rmse += rep.f0_rmse_hz;
            sum_vuv += rep.vuv_error_pct;
            sum_mcd += rep.mcd_db;
            ++n_ok;
            if (opts.verbose)
                std::printf("%s: f0_rmse=%.3f vuv=%.2f%% mcd=%.4f\n", utt.c_str(), rep.f0_rmse_hz,
                            rep.vuv_error_pct, rep.mcd_db);
        } catch (const std::exception& e) {
            skipped.push_back(utt + " (" + e.what() + ")");
        }
    }
    for (const std::string& s : skipped) std::cerr << "warning: skipped " << s << "\n";
    if (n_ok == 0) throw ConfigError("eval: no pairs evaluated");

    std::printf("%-12s %-12s %-16s %-8s\n", "pairs", "F0 RMSE", "V/UV Error (%)", "MCD");
    std::printf("%-12zu %-12.4f %-16.4f %-8.4f\n", n_ok, sum_rmse / double(n_ok),
                sum_vuv / double(n_ok), sum_mcd / double(n_ok));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prosody-guided harmonic-attention vocoder toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand
    CliOptions opts;
    app.add_flag("--verbose", opts.verbose, "chatty progress output");

    auto* synth = app.add_subcommand("synth-data", "generate the synthetic corpus");
    std::string s_out;
    std::size_t s_clips = 8;
    double s_dur = 0.5;
    std::uint64_t s_seed = 1;
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--clips", s_clips, "number of clips")->check(CLI::PositiveNumber);
    synth->add_option("--dur", s_dur, "clip duration in seconds");
    synth->add_option("--seed", s_seed, "dataset seed");

    auto* trn = app.add_subcommand("train", "train on a directory of clips");
    std::string t_data, t_config, t_out;
    long t_steps = -1;
    trn->add_option("--data", t_data, "directory of .wav clips")->required();
    trn->add_option("--config", t_config, "run config file")->required();
    trn->add_option("--out", t_out, "output checkpoint path")->required();
    trn->add_option("--steps", t_steps, "override train.steps");

    auto* voc = app.add_subcommand("vocode", "analyze and resynthesize a waveform");
    std::string v_ckpt, v_in, v_out, v_config;
    voc->add_option("--ckpt", v_ckpt, "checkpoint file")->required();
    voc->add_option("--in", v_in, "input wav")->required();
    voc->add_option("--out", v_out, "output wav")->required();
    voc->add_option("--config", v_config, "run config file");

    auto* anc = app.add_subcommand("anchor", "Griffin-Lim reconstruction from magnitude");
    std::string a_in, a_out, a_config;
    std::size_t a_iters = 32;
    std::uint64_t a_seed = 0;
    anc->add_option("--in", a_in, "input wav")->required();
    anc->add_option("--out", a_out, "output wav")->required();
    anc->add_option("--iters", a_iters, "refinement iterations");
    anc->add_option("--seed", a_seed, "phase init seed");
    anc->add_option("--config", a_config, "run config file");

    auto* evl = app.add_subcommand("eval", "objective metrics for ref/est pairs");
    std::string e_ref, e_est, e_out, e_config;
    evl->add_option("--ref", e_ref, "reference wav or directory")->required();
    evl->add_option("--est", e_est, "estimate wav or directory")->required();
    evl->add_option("--out", e_out, "metrics csv path")->required();
    evl->add_option("--config", e_config, "run config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(s_out, s_clips, s_dur, s_seed, opts);
        if (trn->parsed()) return cmd_train(t_data, t_config, t_out, t_steps, opts);
        if (voc->parsed()) return cmd_vocode(v_ckpt, v_in, v_out, v_config, opts);
        if (anc->parsed()) return cmd_anchor(a_in, a_out, a_iters, a_seed, a_config, opts);
        if (evl->parsed()) return cmd_eval(e_ref, e_est, e_out, e_config, opts);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const WavError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "abort: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
