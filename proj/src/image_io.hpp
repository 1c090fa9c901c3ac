#ifndef SMAC_IMAGE_IO_HPP
#define SMAC_IMAGE_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace smac {

// 8-bit image planes, interleaved rows (RGBRGB... for channels == 3).
struct ImageBytes {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 or 3
    std::vector<uint8_t> pixels;

    uint8_t at(int y, int x, int c = 0) const {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t& at(int y, int x, int c = 0) {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

// Decodes binary PGM (P5) / PPM (P6) with maxval 255. Files whose name ends
// in .png are decoded as non-interlaced 8-bit grayscale or RGB PNG.
// Malformed input raises DataError naming the byte offset.
ImageBytes load_image(const std::string& path);

// Writes a [0,1] map as P5, rounding to the nearest byte.
void save_gray(const std::string& path, const Tensor& map01); // rank-2 [H x W]
void save_pgm_bytes(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& gray);
void save_ppm_bytes(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& rgb);

} // namespace smac

#endif
