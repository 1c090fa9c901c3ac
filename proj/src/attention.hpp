#ifndef SMAC_ATTENTION_HPP
#define SMAC_ATTENTION_HPP

#include <string>

#include "layers.hpp"
#include "tape.hpp"

namespace smac {

// Projection weights of one non-local block. Embeddings live in C' = c_emb
// dimensions (c/2 by default); w_z starts at zero so the block begins as an
// exact identity residual.
struct NlParams {
    Parameter w_theta, w_phi, w_g; // [C x C']
    Parameter w_z;                 // [C' x C]

    NlParams() = default;
    NlParams(const std::string& prefix, int c, int c_emb, Rng& rng);

    int channels() const { return w_theta.value.dim(0); }
    int embed_channels() const { return w_theta.value.dim(1); }
    void collect(ParamRegistry& r);
};

inline int default_embed_channels(int c) { return c > 1 ? c / 2 : 1; }

// Mutual attention + contrast weights for one fused block pair. The
// temperature is stored as exp(t_raw) so it stays positive under
// unconstrained SGD; t_raw = 0 gives T = 1.
struct MacParams {
    NlParams rgb, depth;
    Parameter w_c_r, w_c_d; // [C' x C], zero-init
    Parameter t_raw;        // scalar

    MacParams() = default;
    MacParams(const std::string& prefix, int c, int c_emb, Rng& rng);

    double temperature() const { return std::exp(t_raw.value[0]); }
    void collect(ParamRegistry& r);
};

// Mutual attention without contrast, used inside decoders.
struct SmaParams {
    NlParams rgb, depth;

    SmaParams() = default;
    SmaParams(const std::string& prefix, int c, int c_emb, Rng& rng);

    void collect(ParamRegistry& r);
};

// Image-wise selective attention head: estimates depth features from RGB
// features, downsamples the estimation error twice, and maps it through two
// FC layers to a single sigmoid weight.
struct SelectiveHeadParams {
    Conv2dLayer est1, est2;   // 1x1, C -> C
    BatchNorm2dLayer est1_bn; // BN+ReLU follow the first conv only
    Conv2dLayer down1, down2; // 1x1 stride 2, C -> 256 -> 128
    BatchNorm2dLayer down1_bn, down2_bn;
    LinearLayer fc1, fc2; // -> 256 -> 1

    SelectiveHeadParams() = default;
    // h, w: spatial size of the feature maps this head will see (fixes the
    // flattened FC input width).
    SelectiveHeadParams(const std::string& prefix, int c, int h, int w, Rng& rng);

    void collect(ParamRegistry& r);
};

// Layout bridges: [C x H x W] <-> [HW x C] position-row matrices.
Var chw_to_mat(Tape& t, Var x);
Var mat_to_chw(Tape& t, Var m, int c, int h, int w);

struct NlBlockOut {
    Var z;         // [C x H x W]
    Var attention; // [HW x HW], row-stochastic
};
NlBlockOut nl_block(Tape& t, Var x, NlParams& p);

struct MutualAttentionOut {
    Var y_r, y_d; // [C' x H x W] attentive features
    Var a_r, a_d; // [HW x HW] affinity attention of each modality
};
MutualAttentionOut mutual_attention(Tape& t, Var x_r, Var x_d, MacParams& p);

// softmax(-f / T) with learnable T = exp(t_raw).
Var contrast_attention(Tape& t, Var f, Var t_raw);
// Fixed-temperature variant; throws NumericError when T <= 0.
Var contrast_attention(Tape& t, Var f, double temperature);

struct MacBlockOut {
    Var z_r, z_d;
    Var a_r, a_d; // affinity attention maps
    Var c_r, c_d; // contrast attention maps
};
MacBlockOut mac_block(Tape& t, Var x_r, Var x_d, MacParams& p);

// One scalar in (0,1) per image; requires at least 4x4 spatial input.
Var selective_alpha(Tape& t, Var x_r, Var x_d, SelectiveHeadParams& p, bool train);

struct SmacBlockOut {
    Var z_r, z_d;
    Var alpha;
    Var a_r, a_d, c_r, c_d;
};
// alpha_override >= 0 bypasses the selective head (used for ablations and toys).
SmacBlockOut smac_block(Tape& t, Var x_r, Var x_d, MacParams& p, SelectiveHeadParams& s,
                        bool train, double alpha_override = -1.0);

struct SmaBlockOut {
    Var z_r, z_d;
    Var a_r, a_d; // HW x HW, or HW x HW/4 when keys/values are pooled
};
// Mutual attention without contrast; alpha weights the depth-derived term on
// the RGB side only. downsample_kv max-pools the phi and g maps by 2 (even
// spatial sizes required).
SmaBlockOut sma_block(Tape& t, Var x_r, Var x_d, SmaParams& p, Var alpha, bool downsample_kv);

} // namespace smac

#endif
