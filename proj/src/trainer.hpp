#ifndef SMAC_TRAINER_HPP
#define SMAC_TRAINER_HPP

#include <functional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "network.hpp"
#include "rng.hpp"
#include "tape.hpp"

namespace smac {

struct TrainConfig {
    double lr0 = 0.01;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    int batch = 4;
    int total_iters = 500;
    double decay_point1 = 0.5; // fractions of total_iters
    double decay_point2 = 0.75;
    double decay_factor = 0.1;
    double crop_from = 1.125; // resize factor before the random crop
    double hflip_prob = 0.5;
    uint64_t seed = 1;
    bool depth_invert = false;

    void validate() const; // throws ConfigError
};

struct PreprocessedSample {
    Tensor rgb;   // [3 x H x W], per-image channel means removed
    Tensor depth; // [3 x H x W], rescaled, replicated, means removed
    Tensor gt;    // [1 x H x W] binary; default-constructed when absent
};

// Depth is (optionally) inverted, min-max rescaled to [0,255] (constant maps
// go to 128), replicated to three channels; both tensors then lose their
// per-image channel means. GT binarizes at 128.
PreprocessedSample preprocess(const Sample& s, bool depth_invert);

Sample resize_sample(const Sample& s, int size); // bilinear rgb/depth, nearest gt

// Resize to crop_from*size, random crop back to size, horizontal flip with
// hflip_prob; identical geometry for all three planes.
Sample augment(const Sample& s, int size, double crop_from, double hflip_prob, Rng& rng);

double lr_schedule(int iter, const TrainConfig& cfg);

// v <- momentum*v + grad + wd*value; value <- value - lr(iter)*v; grads zeroed.
// A NaN gradient aborts with a NumericError naming the parameter.
void sgd_step(const std::vector<Parameter*>& params, const TrainConfig& cfg, int iter);

struct TrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> losses; // one entry per iteration
};

// Full augment -> preprocess -> forward -> loss -> backward -> step loop.
// Writes "iter,loss" rows to loss_curve_path when non-empty.
TrainResult train_loop(TwoStreamState& model, const std::vector<Sample>& data,
                       const TrainConfig& cfg, const std::string& loss_curve_path,
                       const std::function<void(int, double)>& progress = {});

} // namespace smac

#endif
