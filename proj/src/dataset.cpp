#include "dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

#include "errors.hpp"

namespace fs = std::filesystem;

namespace smac {

namespace {

bool supported_ext(const std::string& ext) {
    return ext == ".pgm" || ext == ".ppm" || ext == ".png";
}

// stem -> path for every supported image in dir
std::map<std::string, std::string> index_dir(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (!supported_ext(ext)) continue;
        out[entry.path().stem().string()] = entry.path().string();
    }
    return out;
}

} // namespace

std::vector<DatasetEntry> scan_dataset(const std::string& root, bool need_gt) {
    const fs::path base(root);
    if (!fs::is_directory(base)) throw DataError("dataset root not found: " + root);
    auto rgb = index_dir(base / "rgb");
    auto depth = index_dir(base / "depth");
    auto gt = index_dir(base / "gt");
    if (rgb.empty()) throw DataError("empty dataset: no images under " + (base / "rgb").string());

    std::vector<DatasetEntry> entries;
    entries.reserve(rgb.size());
    for (const auto& [stem, rgb_path] : rgb) {
        auto dit = depth.find(stem);
        if (dit == depth.end())
            throw DataError("dataset stem '" + stem + "' has no depth counterpart");
        auto git = gt.find(stem);
        if (git == gt.end() && need_gt)
            throw DataError("dataset stem '" + stem + "' has no ground-truth counterpart");
        entries.push_back({stem, rgb_path, dit->second, git == gt.end() ? "" : git->second});
    }
    return entries;
}

Sample load_sample(const DatasetEntry& entry) {
    ImageBytes rgb = load_image(entry.rgb_path);
    if (rgb.channels != 3)
        throw DataError(entry.rgb_path + ": expected a 3-channel image for rgb/");
    ImageBytes depth = load_image(entry.depth_path);
    if (depth.channels != 1)
        throw DataError(entry.depth_path + ": expected a single-channel image for depth/");
    if (depth.width != rgb.width || depth.height != rgb.height)
        throw DataError(entry.depth_path + ": depth size does not match rgb");

    Sample s;
    s.width = rgb.width;
    s.height = rgb.height;
    s.rgb = std::move(rgb.pixels);
    s.depth = std::move(depth.pixels);
    if (!entry.gt_path.empty()) {
        ImageBytes gt = load_image(entry.gt_path);
        if (gt.channels != 1)
            throw DataError(entry.gt_path + ": expected a single-channel mask for gt/");
        if (gt.width != s.width || gt.height != s.height)
            throw DataError(entry.gt_path + ": gt size does not match rgb");
        s.gt = std::move(gt.pixels);
    }
    return s;
}

} // namespace smac
