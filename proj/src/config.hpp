#ifndef SMAC_CONFIG_HPP
#define SMAC_CONFIG_HPP

#include <string>

#include "network.hpp"
#include "trainer.hpp"

namespace smac {

// Flat `key = value` run configuration covering the network, the training
// recipe, and dataset paths. Unknown keys are rejected; missing keys keep
// their defaults. Keys apply in file order, so `preset = paper` first and
// overrides after is the intended idiom.
struct RunConfig {
    NetworkConfig net;
    TrainConfig train;
    std::string data_dir;

    static RunConfig defaults() { return RunConfig{}; }
    static RunConfig load(const std::string& path);
    static RunConfig parse_text(const std::string& text, const std::string& origin = "<config>");

    void set(const std::string& key, const std::string& value); // throws ConfigError
    void validate() const;
};

} // namespace smac

#endif
