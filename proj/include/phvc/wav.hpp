#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phvc/stft.hpp"

namespace phvc {

class WavError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class WavSampleFormat { PcmS16, Float32 };

namespace detail {

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw WavError("wav: truncated file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

inline std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw WavError("wav: truncated file");
    return std::uint16_t(b[0] | b[1] << 8);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {char(v & 0xFF), char(v >> 8 & 0xFF), char(v >> 16 & 0xFF), char(v >> 24 & 0xFF)};
    out.write(b, 4);
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {char(v & 0xFF), char(v >> 8 & 0xFF)};
    out.write(b, 2);
}

} // namespace detail

// Mono RIFF reader; accepts 16-bit PCM and 32-bit IEEE float.
inline Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WavError("wav: cannot open " + path);

    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw WavError("wav: missing RIFF header");
    detail::read_u32(in); // riff size, unused
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw WavError("wav: not a WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<char> data;

    while (in.read(tag, 4)) {
        const std::uint32_t sz = detail::read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = detail::read_u16(in);
            channels = detail::read_u16(in);
            rate = detail::read_u32(in);
            detail::read_u32(in); // byte rate
            detail::read_u16(in); // block align
            bits = detail::read_u16(in);
            if (sz > 16) in.seekg(sz - 16 + (sz & 1), std::ios::cur);
            else if (sz & 1) in.seekg(1, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data.resize(sz);
            in.read(data.data(), sz);
            if (!in) throw WavError("wav: truncated data chunk");
            if (sz & 1) in.seekg(1, std::ios::cur);
        } else {
            in.seekg(sz + (sz & 1), std::ios::cur);
        }
    }
    if (!have_fmt) throw WavError("wav: missing fmt chunk");
    if (channels != 1) throw WavError("wav: only mono files are supported");

    Waveform y;
    y.sample_rate = double(rate);
    if (format == 1 && bits == 16) {
        const std::size_t n = data.size() / 2;
        y.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::int16_t v =
                std::int16_t(std::uint16_t(std::uint8_t(data[2 * i])) |
                             std::uint16_t(std::uint8_t(data[2 * i + 1])) << 8);
            y.samples[i] = double(v) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data.size() / 4;
        y.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = std::uint32_t(std::uint8_t(data[4 * i])) |
                              std::uint32_t(std::uint8_t(data[4 * i + 1])) << 8 |
                              std::uint32_t(std::uint8_t(data[4 * i + 2])) << 16 |
                              std::uint32_t(std::uint8_t(data[4 * i + 3])) << 24;
            float f;
            std::memcpy(&f, &u, 4);
            y.samples[i] = double(f);
        }
    } else {
        throw WavError("wav: unsupported format (want 16-bit PCM or 32-bit float, got format " +
                       std::to_string(format) + ", " + std::to_string(bits) + " bits)");
    }
    if (y.samples.empty()) throw WavError("wav: no samples in " + path);
    return y;
}

inline void write_wav(const std::string& path, const Waveform& y,
                      WavSampleFormat fmt = WavSampleFormat::Float32) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WavError("wav: cannot write " + path);

    const std::uint32_t n = std::uint32_t(y.samples.size());
    const std::uint16_t bytes_per = fmt == WavSampleFormat::PcmS16 ? 2 : 4;
    const std::uint32_t data_size = n * bytes_per;

    out.write("RIFF", 4);
    detail::write_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    detail::write_u32(out, 16);
    detail::write_u16(out, fmt == WavSampleFormat::PcmS16 ? 1 : 3);
    detail::write_u16(out, 1); // mono
    detail::write_u32(out, std::uint32_t(y.sample_rate));
    detail::write_u32(out, std::uint32_t(y.sample_rate) * bytes_per);
    detail::write_u16(out, bytes_per);
    detail::write_u16(out, bytes_per * 8);
    out.write("data", 4);
    detail::write_u32(out, data_size);

    if (fmt == WavSampleFormat::PcmS16) {
        for (double s : y.samples) {
            long v = std::lrint(s * 32768.0);
            v = v < -32768 ? -32768 : (v > 32767 ? 32767 : v);
            detail::write_u16(out, std::uint16_t(std::int16_t(v)));
        }
    } else {
        for (double s : y.samples) {
            const float f = float(s);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            detail::write_u32(out, u);
        }
    }
    if (!out) throw WavError("wav: write failed for " + path);
}

} // namespace phvc
