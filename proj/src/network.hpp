#ifndef SMAC_NETWORK_HPP
#define SMAC_NETWORK_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "attention.hpp"
#include "layers.hpp"
#include "tape.hpp"

namespace smac {

// Channel widths and wiring of the two-stream model. The toy preset keeps
// every contract of the full-scale network (output stride 8, DenseASPP
// dilations, decoder wiring) at sizes a CPU can train.
struct NetworkConfig {
    std::array<int, 5> stage_channels{16, 32, 32, 48, 48};
    int top_channels = 64;
    int aspp_compress = 48;
    int aspp_branch_channels = 24;
    std::array<int, 3> aspp_dilations{2, 4, 8};
    int fc6_dilation = 4;
    int input_size = 64;
    std::array<double, 5> loss_weights{0.5, 0.5, 0.8, 0.8, 1.0};
    int sma_decoders = 3; // first N decoders fuse via SMA, the rest via concat-residual

    static NetworkConfig toy() { return NetworkConfig{}; }
    static NetworkConfig paper_scale() {
        NetworkConfig c;
        c.stage_channels = {64, 128, 256, 512, 512};
        c.top_channels = 1024;
        c.aspp_compress = 512;
        c.aspp_branch_channels = 176;
        c.fc6_dilation = 12;
        c.input_size = 256;
        return c;
    }

    void validate() const; // throws ConfigError

    // Output channels of decoder idx (1-based): the channel count of the next
    // skip-connected encoder feature.
    int decoder_out_channels(int idx) const {
        return idx < 5 ? stage_channels[static_cast<size_t>(4 - idx)] : stage_channels[0];
    }
};

// One VGG-style stage: two 3x3 conv+BN+ReLU.
struct EncoderStage {
    ConvBnRelu conv1, conv2;

    EncoderStage() = default;
    EncoderStage(const std::string& name, int c_in, int c_out, int dilation, Rng& rng)
        : conv1(name + ".c1", c_in, c_out, 3, 1, dilation, rng),
          conv2(name + ".c2", c_out, c_out, 3, 1, dilation, rng) {}

    Var apply(Tape& t, Var x, bool train) {
        return conv2.apply(t, conv1.apply(t, x, train), train);
    }
    void collect(ParamRegistry& r) {
        conv1.collect(r);
        conv2.collect(r);
    }
};

struct EncoderParams {
    std::array<EncoderStage, 5> stages;
    ConvBnRelu fc6, fc7;

    EncoderParams() = default;
    EncoderParams(const std::string& name, const NetworkConfig& cfg, Rng& rng);
    void collect(ParamRegistry& r);
};

struct EncoderOut {
    std::array<Var, 5> skips; // strides 1, 2, 4, 8, 8
    Var top;                  // stride 8
};
EncoderOut encoder_forward(Tape& t, Var image, EncoderParams& p, bool train);

struct DenseAsppParams {
    ConvBnRelu compress_in;
    std::array<ConvBnRelu, 3> branches;
    ConvBnRelu compress_out;

    DenseAsppParams() = default;
    DenseAsppParams(const std::string& name, const NetworkConfig& cfg, Rng& rng);
    void collect(ParamRegistry& r);
};
Var dense_aspp(Tape& t, Var f, DenseAsppParams& p, bool train);

struct DecoderPair {
    ConvBnRelu r_conv1, r_conv2, d_conv1, d_conv2;
    Conv2dLayer r_head, d_head; // 3x3, 1 channel
    bool use_sma = false;
    bool pool_kv = false;
    SmaParams sma;     // when use_sma
    Conv2dLayer fuse;  // otherwise: conv-only residual into the RGB stream

    DecoderPair() = default;
    DecoderPair(const std::string& name, int idx, int c_prev, int c_skip, int c_out,
                const NetworkConfig& cfg, Rng& rng);
    void collect(ParamRegistry& r);
};

struct TwoStreamState {
    NetworkConfig cfg;
    EncoderParams enc_r, enc_d;
    DenseAsppParams aspp_r, aspp_d;
    MacParams smac;
    SelectiveHeadParams sel;
    NlParams post_nl_r, post_nl_d;
    std::array<DecoderPair, 5> decoders;
    ParamRegistry registry;

    TwoStreamState(const NetworkConfig& config, uint64_t seed);
    TwoStreamState(const TwoStreamState&) = delete;
    TwoStreamState& operator=(const TwoStreamState&) = delete;
};

struct ForwardOptions {
    bool train = false;
    double alpha_override = -1.0; // >= 0 bypasses the selective head
};

struct FusionOut {
    Var z_r, z_d, alpha;
};
FusionOut fusion_stage(Tape& t, Var top_r, Var top_d, TwoStreamState& s, const ForwardOptions& o);

// One decoder level: per-stream concat(skip, upsampled prev) -> two convs,
// then cross-modal fusion.
std::pair<Var, Var> decoder_step(Tape& t, Var prev_r, Var prev_d, Var skip_r, Var skip_d,
                                 DecoderPair& dec, Var alpha, bool train);

Var predict(Tape& t, Var decoder_out, Conv2dLayer& head);

struct ForwardResult {
    std::array<Var, 5> preds_r, preds_d; // sigmoid maps, one per decoder
    Var final_map;                       // RGB stream's last map at input size
    Var alpha;
};
ForwardResult two_stream_forward(Tape& t, TwoStreamState& s, const Tensor& rgb,
                                 const Tensor& depth, const ForwardOptions& o);

// Weighted BCE over all ten stream-decoder predictions; gt is [1 x S x S]
// binary and is nearest-resized to each prediction's size.
Var deep_supervised_loss(Tape& t, const ForwardResult& f, const Tensor& gt,
                         const std::array<double, 5>& weights);

Tensor resize_nearest(const Tensor& src, int out_h, int out_w); // rank-3 [C x H x W]

} // namespace smac

#endif
