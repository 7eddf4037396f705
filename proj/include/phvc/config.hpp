#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "phvc/losses.hpp"
#include "phvc/model.hpp"
#include "phvc/optim.hpp"
#include "phvc/pitch.hpp"
#include "phvc/stft.hpp"

namespace phvc {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat key = value run configuration; '#' starts a comment, unknown keys are
// rejected, missing keys keep the documented defaults.
struct RunConfig {
    StftConfig stft;
    PitchConfig pitch;
    ModelConfig model;
    TrainConfig train;
    MrStftConfig mrstft;
    std::size_t n_mels = 80;

    void validate() const {
        stft.validate();
        pitch.validate(stft.sample_rate);
        model.validate();
        train.validate();
        mrstft.validate(stft.sample_rate);
        if (model.freq_bins != stft.bins())
            throw ConfigError("config: model bins derived from stft.fft_size are inconsistent");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean value for " + key + ": '" + v + "'");
}

// "fft:hop:win,fft:hop:win,..."
inline std::vector<MrStftResolution> parse_resolutions(const std::string& v) {
    std::vector<MrStftResolution> out;
    std::istringstream ss(v);
    std::string triple;
    while (std::getline(ss, triple, ',')) {
        triple = trim(triple);
        if (triple.empty()) continue;
        std::istringstream ts(triple);
        std::string a, b, c;
        if (!std::getline(ts, a, ':') || !std::getline(ts, b, ':') || !std::getline(ts, c))
            throw ConfigError("config: bad mrstft.resolutions triple '" + triple + "'");
        out.push_back({std::size_t(parse_u64("mrstft.resolutions", trim(a))),
                       std::size_t(parse_u64("mrstft.resolutions", trim(b))),
                       std::size_t(parse_u64("mrstft.resolutions", trim(c)))});
    }
    if (out.empty()) throw ConfigError("config: mrstft.resolutions is empty");
    return out;
}

} // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config: empty key or value at line " + std::to_string(line_no));

        if (key == "stft.fft_size") cfg.stft.fft_size = std::size_t(detail::parse_u64(key, val));
        else if (key == "stft.win_size") cfg.stft.win_size = std::size_t(detail::parse_u64(key, val));
        else if (key == "stft.hop") cfg.stft.hop = std::size_t(detail::parse_u64(key, val));
        else if (key == "stft.center") cfg.stft.center = detail::parse_bool(key, val);
        else if (key == "stft.sample_rate") cfg.stft.sample_rate = detail::parse_double(key, val);
        else if (key == "pitch.f0_floor") cfg.pitch.f0_floor = detail::parse_double(key, val);
        else if (key == "pitch.f0_ceil") cfg.pitch.f0_ceil = detail::parse_double(key, val);
        else if (key == "pitch.voicing_threshold")
            cfg.pitch.voicing_threshold = detail::parse_double(key, val);
        else if (key == "pitch.frame_window")
            cfg.pitch.frame_window = std::size_t(detail::parse_u64(key, val));
        else if (key == "model.d") cfg.model.d = std::size_t(detail::parse_u64(key, val));
        else if (key == "model.n_enc_blocks")
            cfg.model.n_enc_blocks = std::size_t(detail::parse_u64(key, val));
        else if (key == "model.kernel") cfg.model.kernel = std::size_t(detail::parse_u64(key, val));
        else if (key == "model.seed") cfg.model.seed = detail::parse_u64(key, val);
        else if (key == "train.lr") cfg.train.lr = detail::parse_double(key, val);
        else if (key == "train.beta1") cfg.train.beta1 = detail::parse_double(key, val);
        else if (key == "train.beta2") cfg.train.beta2 = detail::parse_double(key, val);
        else if (key == "train.weight_decay")
            cfg.train.weight_decay = detail::parse_double(key, val);
        else if (key == "train.batch_size")
            cfg.train.batch_size = std::size_t(detail::parse_u64(key, val));
        else if (key == "train.steps") cfg.train.steps = std::size_t(detail::parse_u64(key, val));
        else if (key == "train.seed") cfg.train.seed = detail::parse_u64(key, val);
        else if (key == "train.adam_eps") cfg.train.adam_eps = detail::parse_double(key, val);
        else if (key == "train.grad_clip") cfg.train.grad_clip = detail::parse_double(key, val);
        else if (key == "loss.lambda_stft")
            cfg.train.weights.lambda_stft = detail::parse_double(key, val);
        else if (key == "loss.lambda_adv")
            cfg.train.weights.lambda_adv = detail::parse_double(key, val);
        else if (key == "loss.lambda_phase")
            cfg.train.weights.lambda_phase = detail::parse_double(key, val);
        else if (key == "mrstft.resolutions")
            cfg.mrstft.resolutions = detail::parse_resolutions(val);
        else if (key == "eval.n_mels") cfg.n_mels = std::size_t(detail::parse_u64(key, val));
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.model.freq_bins = cfg.stft.bins();
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return parse_run_config(in);
}

} // namespace phvc
