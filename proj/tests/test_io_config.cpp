#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "config.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "image_io.hpp"

using namespace smac;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "smac_io_test";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void be32_push(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

// Minimal test-side PNG writer (zlib compress + crc32); per-row filter types
// chosen by the caller so the decoder's unfiltering is exercised.
std::vector<uint8_t> encode_png(int w, int h, int channels, const std::vector<uint8_t>& pixels,
                                const std::vector<uint8_t>& row_filters) {
    const size_t row_bytes = static_cast<size_t>(w) * channels;
    std::vector<uint8_t> raw;
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = row_filters[static_cast<size_t>(y)];
        raw.push_back(filter);
        const uint8_t* cur = &pixels[row_bytes * static_cast<size_t>(y)];
        const uint8_t* pri = y > 0 ? &pixels[row_bytes * static_cast<size_t>(y - 1)] : nullptr;
        for (size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= static_cast<size_t>(channels) ? cur[i - channels] : 0;
            const int b = pri ? pri[i] : 0;
            const int c = (pri && i >= static_cast<size_t>(channels)) ? pri[i - channels] : 0;
            int v = cur[i];
            switch (filter) {
                case 0: break;
                case 1: v -= a; break;
                case 2: v -= b; break;
                case 3: v -= (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v -= (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
            }
            raw.push_back(static_cast<uint8_t>(v & 0xff));
        }
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    REQUIRE(compress(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size())) == Z_OK);
    comp.resize(comp_len);

    std::vector<uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    auto chunk = [&](const char* type, const std::vector<uint8_t>& data) {
        be32_push(png, static_cast<uint32_t>(data.size()));
        const size_t start = png.size();
        png.insert(png.end(), type, type + 4);
        png.insert(png.end(), data.begin(), data.end());
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0, png.data() + start, static_cast<uInt>(png.size() - start)));
        be32_push(png, crc);
    };
    std::vector<uint8_t> ihdr;
    be32_push(ihdr, static_cast<uint32_t>(w));
    be32_push(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);                                      // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);                  // color type
    ihdr.push_back(0);                                      // compression
    ihdr.push_back(0);                                      // filter method
    ihdr.push_back(0);                                      // no interlace
    chunk("IHDR", ihdr);
    chunk("IDAT", comp);
    chunk("IEND", {});
    return png;
}

} // namespace

TEST_CASE("pgm/ppm decode") {
    SUBCASE("2x2 P5 with known payload") {
        const fs::path p = temp_dir() / "a.pgm";
        write_bytes(p, {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0x00, 0x40, 0x80,
                        0xFF});
        ImageBytes img = load_image(p.string());
        CHECK(img.width == 2);
        CHECK(img.height == 2);
        CHECK(img.channels == 1);
        CHECK(img.at(0, 0) == 0);
        CHECK(img.at(0, 1) == 64);
        CHECK(img.at(1, 0) == 128);
        CHECK(img.at(1, 1) == 255);
    }
    SUBCASE("P6 header grammar with comments") {
        const fs::path p = temp_dir() / "b.ppm";
        std::vector<uint8_t> bytes{'P', '6', '\n', '#', ' ', 'c', '\n', '2', ' ', '1', '\n',
                                   '2', '5', '5', '\n'};
        for (uint8_t v : {10, 20, 30, 40, 50, 60}) bytes.push_back(v);
        write_bytes(p, bytes);
        ImageBytes img = load_image(p.string());
        CHECK(img.width == 2);
        CHECK(img.height == 1);
        CHECK(img.channels == 3);
        CHECK(img.at(0, 1, 2) == 60);
    }
    SUBCASE("maxval other than 255 is rejected with a byte offset") {
        const fs::path p = temp_dir() / "c.pgm";
        write_bytes(p, {'P', '5', '\n', '1', ' ', '1', '\n', '6', '5', '5', '3', '5', '\n', 0});
        CHECK_THROWS_WITH_AS(load_image(p.string()), doctest::Contains("byte offset"), DataError);
    }
    SUBCASE("truncated payload is rejected") {
        const fs::path p = temp_dir() / "d.pgm";
        write_bytes(p, {'P', '5', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 1, 2, 3});
        CHECK_THROWS_AS(load_image(p.string()), DataError);
    }
    SUBCASE("bad magic is rejected") {
        const fs::path p = temp_dir() / "e.pgm";
        write_bytes(p, {'P', '2', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', '7'});
        CHECK_THROWS_AS(load_image(p.string()), DataError);
    }
}

TEST_CASE("save_gray") {
    SUBCASE("all-0.5 map becomes all-128 bytes") {
        const fs::path p = temp_dir() / "half.pgm";
        save_gray(p.string(), Tensor::full({3, 3}, 0.5));
        ImageBytes img = load_image(p.string());
        for (uint8_t v : img.pixels) CHECK(v == 128);
    }
    SUBCASE("value 1.0 becomes byte 255") {
        const fs::path p = temp_dir() / "one.pgm";
        save_gray(p.string(), Tensor::full({1, 1}, 1.0));
        CHECK(load_image(p.string()).pixels[0] == 255);
    }
    SUBCASE("save-load-save is bytewise idempotent") {
        const fs::path p1 = temp_dir() / "r1.pgm";
        const fs::path p2 = temp_dir() / "r2.pgm";
        Tensor m({2, 2}, {0.1234, 0.5678, 0.9012, 0.3456});
        save_gray(p1.string(), m);
        ImageBytes img = load_image(p1.string());
        Tensor back({2, 2});
        for (int64_t i = 0; i < 4; ++i) {
            back[i] = img.pixels[static_cast<size_t>(i)] / 255.0;
            CHECK(std::fabs(back[i] - m[i]) <= 0.5 / 255.0 + 1e-12); // 1/255 round-trip bound
        }
        save_gray(p2.string(), back);
        CHECK(file_bytes(p1) == file_bytes(p2));
    }
    SUBCASE("unwritable path raises an error") {
        CHECK_THROWS_AS(save_gray("/nonexistent_dir_xyz/map.pgm", Tensor::full({2, 2}, 0.5)),
                        DataError);
    }
}

TEST_CASE("png subset decode") {
    SUBCASE("grayscale with every filter type") {
        const int w = 7, h = 5;
        std::vector<uint8_t> pixels(static_cast<size_t>(w) * h);
        for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint8_t>((i * 37) % 256);
        const fs::path p = temp_dir() / "g.png";
        write_bytes(p, encode_png(w, h, 1, pixels, {0, 1, 2, 3, 4}));
        ImageBytes img = load_image(p.string());
        CHECK(img.channels == 1);
        CHECK(img.pixels == pixels);
    }
    SUBCASE("rgb with sub/up/paeth filters") {
        const int w = 4, h = 4;
        std::vector<uint8_t> pixels(static_cast<size_t>(w) * h * 3);
        for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint8_t>((i * 71 + 13) % 256);
        const fs::path p = temp_dir() / "c.png";
        write_bytes(p, encode_png(w, h, 3, pixels, {1, 4, 2, 3}));
        ImageBytes img = load_image(p.string());
        CHECK(img.channels == 3);
        CHECK(img.pixels == pixels);
    }
    SUBCASE("interlaced and paletted files are rejected") {
        const int w = 2, h = 2;
        std::vector<uint8_t> pixels{1, 2, 3, 4};
        std::vector<uint8_t> png = encode_png(w, h, 1, pixels, {0, 0});
        // corrupt the interlace byte inside IHDR (offset: 8 sig + 8 hdr + 12)
        std::vector<uint8_t> interlaced = png;
        interlaced[8 + 8 + 12] = 1;
        const fs::path p = temp_dir() / "i.png";
        write_bytes(p, interlaced);
        CHECK_THROWS_AS(load_image(p.string()), DataError);
        std::vector<uint8_t> palette = png;
        palette[8 + 8 + 9] = 3; // color type palette
        write_bytes(p, palette);
        CHECK_THROWS_AS(load_image(p.string()), DataError);
    }
}

TEST_CASE("run config") {
    SUBCASE("defaults carry the training recipe constants") {
        RunConfig cfg = RunConfig::defaults();
        CHECK(cfg.train.lr0 == 0.01);
        CHECK(cfg.train.weight_decay == 0.0005);
        CHECK(cfg.train.momentum == 0.9);
        CHECK(cfg.train.decay_point1 == 0.5);
        CHECK(cfg.train.decay_point2 == 0.75);
        CHECK(cfg.train.decay_factor == 0.1);
        CHECK(cfg.train.hflip_prob == 0.5);
        CHECK(cfg.train.crop_from == doctest::Approx(9.0 / 8.0));
        CHECK(cfg.net.loss_weights == std::array<double, 5>{0.5, 0.5, 0.8, 0.8, 1.0});
    }
    SUBCASE("parse with comments, overrides, and paper preset") {
        const std::string text =
            "# run config\n"
            "preset = paper\n"
            "batch = 6          # override the paper batch\n"
            "input_size = 64\n"
            "depth_invert = true\n"
            "data_dir = /tmp/ds\n";
        RunConfig cfg = RunConfig::parse_text(text);
        CHECK(cfg.net.stage_channels[4] == 512);
        CHECK(cfg.net.aspp_branch_channels == 176);
        CHECK(cfg.train.total_iters == 40000);
        CHECK(cfg.train.batch == 6);
        CHECK(cfg.net.input_size == 64);
        CHECK(cfg.train.depth_invert);
        CHECK(cfg.data_dir == "/tmp/ds");
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_WITH_AS(RunConfig::parse_text("nonsense_key = 1\n"),
                             doctest::Contains("nonsense_key"), ConfigError);
    }
    SUBCASE("malformed values are rejected with line info") {
        CHECK_THROWS_WITH_AS(RunConfig::parse_text("batch = twelve\n"), doctest::Contains(":1:"),
                             ConfigError);
        CHECK_THROWS_AS(RunConfig::parse_text("just a line\n"), ConfigError);
    }
    SUBCASE("file round trip") {
        const fs::path p = temp_dir() / "run.cfg";
        std::ofstream(p) << "input_size = 32\nseed = 9\n";
        RunConfig cfg = RunConfig::load(p.string());
        CHECK(cfg.net.input_size == 32);
        CHECK(cfg.train.seed == 9);
        CHECK_THROWS_AS(RunConfig::load("/nonexistent_xyz.cfg"), ConfigError);
    }
}

TEST_CASE("dataset scan") {
    const fs::path root = temp_dir() / "ds";
    fs::create_directories(root / "rgb");
    fs::create_directories(root / "depth");
    fs::create_directories(root / "gt");
    // one complete stem
    save_ppm_bytes((root / "rgb" / "img1.ppm").string(), 2, 2, std::vector<uint8_t>(12, 100));
    save_pgm_bytes((root / "depth" / "img1.pgm").string(), 2, 2, {10, 20, 30, 40});
    save_pgm_bytes((root / "gt" / "img1.pgm").string(), 2, 2, {255, 0, 0, 255});

    SUBCASE("pairs by stem and loads planes") {
        auto entries = scan_dataset(root.string(), true);
        REQUIRE(entries.size() == 1);
        CHECK(entries[0].stem == "img1");
        Sample s = load_sample(entries[0]);
        CHECK(s.width == 2);
        CHECK(s.has_gt());
        CHECK(s.depth[3] == 40);
    }
    SUBCASE("missing depth counterpart is a data error") {
        save_ppm_bytes((root / "rgb" / "img2.ppm").string(), 2, 2, std::vector<uint8_t>(12, 50));
        CHECK_THROWS_WITH_AS(scan_dataset(root.string(), true), doctest::Contains("img2"),
                             DataError);
        fs::remove(root / "rgb" / "img2.ppm");
    }
    SUBCASE("gt optional in infer mode") {
        fs::remove(root / "gt" / "img1.pgm");
        CHECK_THROWS_AS(scan_dataset(root.string(), true), DataError);
        auto entries = scan_dataset(root.string(), false);
        REQUIRE(entries.size() == 1);
        CHECK(entries[0].gt_path.empty());
        Sample s = load_sample(entries[0]);
        CHECK_FALSE(s.has_gt());
        // restore for other subcases
        save_pgm_bytes((root / "gt" / "img1.pgm").string(), 2, 2, {255, 0, 0, 255});
    }
    SUBCASE("empty dataset is a data error") {
        const fs::path empty = temp_dir() / "empty_ds";
        fs::create_directories(empty / "rgb");
        CHECK_THROWS_AS(scan_dataset(empty.string(), false), DataError);
    }
}
