#pragma once

// Mono RIFF/WAVE I/O. Writes 16-bit PCM; reads 8/16/24/32-bit integer PCM
// and 32/64-bit float, keeping the first channel of multichannel files.
// Integer samples map to [-1, 1) as value / 2^(bits-1); int16 uses /32768.

#include <tcnd/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

namespace tcnd {

struct WavData {
    std::vector<double> samples;
    std::uint32_t sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16(const std::uint8_t* p) { return std::uint16_t(p[0] | p[1] << 8); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace detail

inline std::int16_t to_pcm16(double v) {
    const double scaled = std::round(v * 32768.0);
    return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::vector<std::uint8_t> encode_wav16(std::span<const double> samples, std::uint32_t sample_rate) {
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    detail::put_tag(out, "RIFF");
    detail::put_u32(out, 36 + data_bytes);
    detail::put_tag(out, "WAVE");
    detail::put_tag(out, "fmt ");
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);  // PCM
    detail::put_u16(out, 1);  // mono
    detail::put_u32(out, sample_rate);
    detail::put_u32(out, sample_rate * 2);
    detail::put_u16(out, 2);
    detail::put_u16(out, 16);
    detail::put_tag(out, "data");
    detail::put_u32(out, data_bytes);
    for (double v : samples) detail::put_u16(out, static_cast<std::uint16_t>(to_pcm16(v)));
    return out;
}

inline WavData decode_wav(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>") {
    auto fail = [&](const std::string& why) { return IngestionError(origin, why); };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw fail("not a RIFF/WAVE file");
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = detail::read_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + 16 > bytes.size()) throw fail("truncated fmt chunk");
            format = detail::read_u16(bytes.data() + body);
            channels = detail::read_u16(bytes.data() + body + 2);
            rate = detail::read_u32(bytes.data() + body + 4);
            bits = detail::read_u16(bytes.data() + body + 14);
            if (format == 0xFFFE && size >= 26) format = detail::read_u16(bytes.data() + body + 24);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) throw fail("data chunk before fmt chunk");
            if (channels == 0) throw fail("zero channels");
            const bool is_float = format == 3;
            if (format != 1 && !is_float) throw fail("unsupported sample format " + std::to_string(format));
            if ((is_float && bits != 32 && bits != 64) || (!is_float && (bits == 0 || bits > 32 || bits % 8 != 0))) {
                throw fail("unsupported bit depth " + std::to_string(bits));
            }
            const std::size_t width = bits / 8, frame = width * channels;
            const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
            WavData wav;
            wav.sample_rate = rate;
            wav.samples.reserve(avail / frame);
            for (std::size_t off = body; off + frame <= body + avail; off += frame) {
                const std::uint8_t* s = bytes.data() + off;
                double v = 0.0;
                if (is_float && bits == 32) {
                    float f;
                    std::memcpy(&f, s, 4);
                    v = f;
                } else if (is_float) {
                    std::memcpy(&v, s, 8);
                } else if (bits == 8) {
                    v = (static_cast<int>(s[0]) - 128) / 128.0;
                } else {
                    std::uint32_t raw = 0;
                    for (std::size_t b = 0; b < width; ++b) raw |= std::uint32_t(s[b]) << (8 * b);
                    const unsigned shift = static_cast<unsigned>(32 - bits);
                    const auto signed_value = static_cast<std::int32_t>(raw << shift) >> shift;
                    v = signed_value / std::ldexp(1.0, bits - 1);
                }
                if (!std::isfinite(v)) throw fail("non-finite sample");
                wav.samples.push_back(v);
            }
            return wav;
        }
        pos = body + size + (size & 1u);
    }
    throw fail(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline void write_wav16(const std::string& path, std::span<const double> samples, std::uint32_t sample_rate) {
    const auto bytes = encode_wav16(samples, sample_rate);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError(path, "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IngestionError(path, "write failed");
}

inline WavData read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError(path, "cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes, path);
}

}  // namespace tcnd
