#include "image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace smac {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

[[noreturn]] void parse_fail(const std::string& path, size_t offset, const std::string& what) {
    throw DataError(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
}

// PNM header token scanner: skips whitespace and '#' comments.
struct PnmScanner {
    const std::vector<uint8_t>& bytes;
    const std::string& path;
    size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            const uint8_t c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int next_int() {
        skip_space_and_comments();
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
            parse_fail(path, pos, "expected integer in header");
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 30) parse_fail(path, pos, "header value out of range");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

ImageBytes load_pnm(const std::string& path, const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 2) parse_fail(path, 0, "not a PNM file");
    if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        parse_fail(path, 0, "unsupported magic (want P5 or P6)");
    const int channels = bytes[1] == '5' ? 1 : 3;
    PnmScanner sc{bytes, path, 2};
    const int width = sc.next_int();
    const int height = sc.next_int();
    const size_t maxval_at = sc.pos;
    const int maxval = sc.next_int();
    if (width < 1 || height < 1) parse_fail(path, 2, "non-positive dimensions");
    if (maxval != 255) parse_fail(path, maxval_at, "maxval must be 255, got " + std::to_string(maxval));
    if (sc.pos >= bytes.size()) parse_fail(path, sc.pos, "missing payload");
    const uint8_t sep = bytes[sc.pos];
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
        parse_fail(path, sc.pos, "expected single whitespace before payload");
    ++sc.pos;
    const size_t need = static_cast<size_t>(width) * height * channels;
    if (bytes.size() - sc.pos < need)
        parse_fail(path, bytes.size(), "truncated payload, need " + std::to_string(need) +
                                           " bytes, have " + std::to_string(bytes.size() - sc.pos));
    ImageBytes img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(sc.pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(sc.pos + need));
    return img;
}

uint32_t be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

ImageBytes load_png(const std::string& path, const std::vector<uint8_t>& bytes) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        parse_fail(path, 0, "not a PNG file");

    int width = 0, height = 0, channels = 0;
    bool have_ihdr = false;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) parse_fail(path, pos, "truncated chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* data = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) parse_fail(path, pos, "bad IHDR length");
            width = static_cast<int>(be32(data));
            height = static_cast<int>(be32(data + 4));
            const int bit_depth = data[8], color_type = data[9];
            const int interlace = data[12];
            if (bit_depth != 8) parse_fail(path, pos + 8 + 8, "only 8-bit PNG supported");
            if (color_type == 0)
                channels = 1;
            else if (color_type == 2)
                channels = 3;
            else
                parse_fail(path, pos + 8 + 9,
                           "only grayscale or RGB PNG supported, color type " +
                               std::to_string(color_type));
            if (interlace != 0) parse_fail(path, pos + 8 + 12, "interlaced PNG not supported");
            have_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len; // chunk CRCs are not verified
    }
    if (!have_ihdr || width < 1 || height < 1) parse_fail(path, 8, "missing IHDR");
    if (idat.empty()) parse_fail(path, pos, "missing IDAT");

    const size_t row_bytes = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> raw((row_bytes + 1) * height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size())
        parse_fail(path, pos, "zlib inflate failed (rc " + std::to_string(zrc) + ")");

    ImageBytes img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.pixels.assign(static_cast<size_t>(width) * height * channels, 0);
    const int bpp = channels;
    for (int y = 0; y < height; ++y) {
        const uint8_t filter = raw[(row_bytes + 1) * y];
        const uint8_t* src = &raw[(row_bytes + 1) * y + 1];
        uint8_t* dst = &img.pixels[row_bytes * static_cast<size_t>(y)];
        const uint8_t* prior = y > 0 ? &img.pixels[row_bytes * static_cast<size_t>(y - 1)] : nullptr;
        for (size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
            const int b = prior ? prior[i] : 0;
            const int c = (prior && i >= static_cast<size_t>(bpp)) ? prior[i - bpp] : 0;
            int v;
            switch (filter) {
                case 0: v = src[i]; break;
                case 1: v = src[i] + a; break;
                case 2: v = src[i] + b; break;
                case 3: v = src[i] + (a + b) / 2; break;
                case 4: v = src[i] + paeth(a, b, c); break;
                default:
                    parse_fail(path, (row_bytes + 1) * y, "bad filter type " + std::to_string(filter));
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
    }
    return img;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_pnm(const std::string& path, const char* magic, int width, int height,
               const std::vector<uint8_t>& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << magic << "\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw DataError("write failed for " + path);
}

} // namespace

ImageBytes load_image(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    if (ends_with(path, ".png")) return load_png(path, bytes);
    return load_pnm(path, bytes);
}

void save_gray(const std::string& path, const Tensor& map01) {
    if (map01.rank() != 2) throw ShapeError("save_gray: map must be rank-2, got " + map01.shape_str());
    const int h = map01.dim(0), w = map01.dim(1);
    std::vector<uint8_t> payload(static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < map01.numel(); ++i) {
        const double v = std::clamp(map01[i], 0.0, 1.0);
        payload[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    write_pnm(path, "P5", w, h, payload);
}

void save_pgm_bytes(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& gray) {
    if (gray.size() != static_cast<size_t>(width) * height)
        throw ShapeError("save_pgm_bytes: payload size mismatch");
    write_pnm(path, "P5", width, height, gray);
}

void save_ppm_bytes(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& rgb) {
    if (rgb.size() != static_cast<size_t>(width) * height * 3)
        throw ShapeError("save_ppm_bytes: payload size mismatch");
    write_pnm(path, "P6", width, height, rgb);
}

} // namespace smac
