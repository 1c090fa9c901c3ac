#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace smac {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const int x = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': expected boolean, got '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "preset") {
        const std::string saved_data = data_dir;
        if (value == "toy") {
            net = NetworkConfig::toy();
        } else if (value == "paper") {
            net = NetworkConfig::paper_scale();
            train.batch = 12;
            train.total_iters = 40000;
        } else {
            throw ConfigError("key 'preset': expected 'toy' or 'paper', got '" + value + "'");
        }
        data_dir = saved_data;
    } else if (key == "input_size") {
        net.input_size = parse_int(key, value);
    } else if (key == "top_channels") {
        net.top_channels = parse_int(key, value);
    } else if (key == "aspp_compress") {
        net.aspp_compress = parse_int(key, value);
    } else if (key == "aspp_branch_channels") {
        net.aspp_branch_channels = parse_int(key, value);
    } else if (key == "fc6_dilation") {
        net.fc6_dilation = parse_int(key, value);
    } else if (key == "sma_decoders") {
        net.sma_decoders = parse_int(key, value);
    } else if (key == "stage_channels") {
        auto items = split_csv(value);
        if (items.size() != 5) throw ConfigError("key 'stage_channels': expected 5 values");
        for (int i = 0; i < 5; ++i)
            net.stage_channels[static_cast<size_t>(i)] = parse_int(key, items[static_cast<size_t>(i)]);
    } else if (key == "aspp_dilations") {
        auto items = split_csv(value);
        if (items.size() != 3) throw ConfigError("key 'aspp_dilations': expected 3 values");
        for (int i = 0; i < 3; ++i)
            net.aspp_dilations[static_cast<size_t>(i)] = parse_int(key, items[static_cast<size_t>(i)]);
    } else if (key == "loss_weights") {
        auto items = split_csv(value);
        if (items.size() != 5) throw ConfigError("key 'loss_weights': expected 5 values");
        for (int i = 0; i < 5; ++i)
            net.loss_weights[static_cast<size_t>(i)] = parse_double(key, items[static_cast<size_t>(i)]);
    } else if (key == "lr0") {
        train.lr0 = parse_double(key, value);
    } else if (key == "weight_decay") {
        train.weight_decay = parse_double(key, value);
    } else if (key == "momentum") {
        train.momentum = parse_double(key, value);
    } else if (key == "batch") {
        train.batch = parse_int(key, value);
    } else if (key == "total_iters") {
        train.total_iters = parse_int(key, value);
    } else if (key == "decay_point1") {
        train.decay_point1 = parse_double(key, value);
    } else if (key == "decay_point2") {
        train.decay_point2 = parse_double(key, value);
    } else if (key == "decay_factor") {
        train.decay_factor = parse_double(key, value);
    } else if (key == "crop_from") {
        train.crop_from = parse_double(key, value);
    } else if (key == "hflip_prob") {
        train.hflip_prob = parse_double(key, value);
    } else if (key == "seed") {
        train.seed = static_cast<uint64_t>(parse_int(key, value));
    } else if (key == "depth_invert") {
        train.depth_invert = parse_bool(key, value);
    } else if (key == "data_dir") {
        data_dir = value;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

void RunConfig::validate() const {
    net.validate();
    train.validate();
}

} // namespace smac
