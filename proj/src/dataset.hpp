#ifndef SMAC_DATASET_HPP
#define SMAC_DATASET_HPP

#include <string>
#include <vector>

#include "image_io.hpp"

namespace smac {

// One training/evaluation example: RGB, single-channel depth, and (when
// present) a binary ground-truth mask, all sharing one H x W grid.
struct Sample {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;   // h*w*3 interleaved
    std::vector<uint8_t> depth; // h*w
    std::vector<uint8_t> gt;    // h*w; empty when no ground truth

    bool has_gt() const { return !gt.empty(); }
};

struct DatasetEntry {
    std::string stem;
    std::string rgb_path;
    std::string depth_path;
    std::string gt_path; // empty when absent
};

// Scans root/{rgb,depth,gt} and pairs files by shared stem. Throws DataError
// on an empty dataset or a stem missing its counterpart.
std::vector<DatasetEntry> scan_dataset(const std::string& root, bool need_gt);

Sample load_sample(const DatasetEntry& entry);

} // namespace smac

#endif
