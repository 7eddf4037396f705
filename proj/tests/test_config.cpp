#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "phvc/config.hpp"

using namespace phvc;

TEST_CASE("empty config yields the documented defaults") {
    std::istringstream in("");
    const RunConfig cfg = parse_run_config(in);
    REQUIRE(cfg.stft.fft_size == 1024);
    REQUIRE(cfg.stft.win_size == 1024);
    REQUIRE(cfg.stft.hop == 256);
    REQUIRE(cfg.stft.center);
    REQUIRE(cfg.stft.sample_rate == 22050.0);
    REQUIRE(cfg.pitch.f0_floor == 60.0);
    REQUIRE(cfg.pitch.f0_ceil == 500.0);
    REQUIRE(cfg.pitch.voicing_threshold == 0.45);
    REQUIRE(cfg.pitch.frame_window == 2048);
    REQUIRE(cfg.model.d == 64);
    REQUIRE(cfg.model.freq_bins == 513);
    REQUIRE(cfg.model.n_enc_blocks == 2);
    REQUIRE(cfg.model.kernel == 5);
    REQUIRE(cfg.train.lr == 2e-4);
    REQUIRE(cfg.train.beta1 == 0.8);
    REQUIRE(cfg.train.beta2 == 0.99);
    REQUIRE(cfg.train.weight_decay == 0.01);
    REQUIRE(cfg.train.batch_size == 16);
    REQUIRE(cfg.train.adam_eps == 1e-8);
    REQUIRE(cfg.train.weights.lambda_stft == 1.0);
    REQUIRE(cfg.train.weights.lambda_adv == 0.1);
    REQUIRE(cfg.train.weights.lambda_phase == 1.0);
    REQUIRE(cfg.mrstft.resolutions.size() == 3);
    REQUIRE(cfg.mrstft.resolutions[1].fft_size == 1024);
    REQUIRE(cfg.mrstft.resolutions[1].hop == 256);
}

TEST_CASE("config parses overrides, comments, and blank lines") {
    std::istringstream in(
        "# training setup\n"
        "stft.fft_size = 512\n"
        "stft.win_size = 512\n"
        "stft.hop = 128\n"
        "\n"
        "model.d = 32           # narrow model\n"
        "train.steps = 42\n"
        "loss.lambda_adv = 0\n"
        "mrstft.resolutions = 256:64:256, 512:128:512\n");
    const RunConfig cfg = parse_run_config(in);
    REQUIRE(cfg.stft.fft_size == 512);
    REQUIRE(cfg.model.d == 32);
    REQUIRE(cfg.model.freq_bins == 257); // derived from fft_size
    REQUIRE(cfg.train.steps == 42);
    REQUIRE(cfg.train.weights.lambda_adv == 0.0);
    REQUIRE(cfg.mrstft.resolutions.size() == 2);
    REQUIRE(cfg.mrstft.resolutions[0].fft_size == 256);
    REQUIRE(cfg.mrstft.resolutions[1].win_size == 512);
}

TEST_CASE("config rejects unknown keys and malformed lines") {
    std::istringstream unknown("no.such.key = 3\n");
    REQUIRE_THROWS_AS(parse_run_config(unknown), ConfigError);

    std::istringstream malformed("stft.fft_size 1024\n");
    REQUIRE_THROWS_AS(parse_run_config(malformed), ConfigError);

    std::istringstream bad_value("train.lr = fast\n");
    REQUIRE_THROWS_AS(parse_run_config(bad_value), ConfigError);

    std::istringstream bad_bool("stft.center = maybe\n");
    REQUIRE_THROWS_AS(parse_run_config(bad_bool), ConfigError);
}

TEST_CASE("config validates cross-field invariants") {
    std::istringstream bad_hop("stft.hop = 2048\n");
    REQUIRE_THROWS_AS(parse_run_config(bad_hop), ConfigError);

    std::istringstream bad_pitch("pitch.f0_floor = 600\npitch.f0_ceil = 500\n");
    REQUIRE_THROWS_AS(parse_run_config(bad_pitch), ConfigError);

    std::istringstream bad_res("mrstft.resolutions = 100:25:100\n"); // not a power of two
    REQUIRE_THROWS_AS(parse_run_config(bad_res), ConfigError);

    REQUIRE_THROWS_AS(load_run_config("/nonexistent/phvc.cfg"), ConfigError);
}
