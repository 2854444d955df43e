#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsc/dataset_io.hpp"

namespace dsc::png {

namespace detail {

inline uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0xFFFFFFFFu) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc;
}

inline void put_u32_be(std::string& out, uint32_t v) {
    out.push_back(char(v >> 24));
    out.push_back(char(v >> 16));
    out.push_back(char(v >> 8));
    out.push_back(char(v));
}

inline void chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32_be(out, uint32_t(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    put_u32_be(out, crc32(reinterpret_cast<const uint8_t*>(body.data()), body.size()) ^ 0xFFFFFFFFu);
}

inline uint32_t adler32(const uint8_t* data, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

}  // namespace detail

/// Minimal 8-bit grayscale PNG writer; the deflate stream uses stored
/// (uncompressed) blocks, so no zlib dependency and byte-identical output.
inline void write_gray8(const std::string& path, size_t width, size_t height,
                        const std::vector<uint8_t>& pixels) {
    if (pixels.size() != width * height) throw ValidationError("pixel buffer size mismatch");
    std::string out("\x89PNG\r\n\x1a\n", 8);

    std::string ihdr;
    detail::put_u32_be(ihdr, uint32_t(width));
    detail::put_u32_be(ihdr, uint32_t(height));
    ihdr += char(8);  // bit depth
    ihdr += char(0);  // grayscale
    ihdr += std::string(3, char(0));
    detail::chunk(out, "IHDR", ihdr);

    // raw scanlines, filter byte 0 per row
    std::string raw;
    raw.reserve(height * (width + 1));
    for (size_t r = 0; r < height; ++r) {
        raw += char(0);
        raw.append(reinterpret_cast<const char*>(pixels.data() + r * width), width);
    }

    std::string z;
    z += char(0x78);
    z += char(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        size_t len = std::min<size_t>(65535, raw.size() - off);
        bool last = off + len == raw.size();
        z += char(last ? 1 : 0);
        z += char(len & 0xFF);
        z += char((len >> 8) & 0xFF);
        z += char(~len & 0xFF);
        z += char((~len >> 8) & 0xFF);
        z.append(raw, off, len);
        off += len;
    }
    detail::put_u32_be(z, detail::adler32(reinterpret_cast<const uint8_t*>(raw.data()), raw.size()));
    detail::chunk(out, "IDAT", z);
    detail::chunk(out, "IEND", "");
    io::detail::write_file_atomic(path, out);
}

/// Intensity map rendered as a grayscale image (1 = white).
inline void write_intensity_map(const std::string& path, const enc::IntensityMap& m) {
    std::vector<uint8_t> px(size_t(enc::kRows) * enc::kCols);
    for (int r = 0; r < enc::kRows; ++r)
        for (int c = 0; c < enc::kCols; ++c)
            px[size_t(r) * enc::kCols + size_t(c)] =
                uint8_t(std::lround(clamp(m.at(r, c), 0.0, 1.0) * 255.0));
    write_gray8(path, size_t(enc::kCols), size_t(enc::kRows), px);
}

}  // namespace dsc::png
