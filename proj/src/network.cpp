#include "network.hpp"

#include "errors.hpp"

namespace smac {

void NetworkConfig::validate() const {
    if (input_size < 16 || input_size % 8 != 0)
        throw ConfigError("input_size must be a multiple of 8 and at least 16, got " +
                          std::to_string(input_size));
    for (int c : stage_channels)
        if (c < 1) throw ConfigError("stage_channels must be positive");
    if (top_channels < 1 || aspp_compress < 1 || aspp_branch_channels < 1)
        throw ConfigError("channel widths must be positive");
    for (int d : aspp_dilations)
        if (d < 1) throw ConfigError("aspp_dilations must be >= 1");
    if (fc6_dilation < 1) throw ConfigError("fc6_dilation must be >= 1");
    if (sma_decoders < 0 || sma_decoders > 5)
        throw ConfigError("sma_decoders must be in [0, 5]");
    for (double w : loss_weights)
        if (w < 0) throw ConfigError("loss_weights must be nonnegative");
}

EncoderParams::EncoderParams(const std::string& name, const NetworkConfig& cfg, Rng& rng) {
    int c_in = 3;
    for (int i = 0; i < 5; ++i) {
        const int dil = i >= 3 ? 2 : 1; // stages 4-5 trade stride for dilation
        stages[static_cast<size_t>(i)] =
            EncoderStage(name + ".s" + std::to_string(i + 1), c_in, cfg.stage_channels[static_cast<size_t>(i)], dil, rng);
        c_in = cfg.stage_channels[static_cast<size_t>(i)];
    }
    fc6 = ConvBnRelu(name + ".fc6", c_in, cfg.top_channels, 3, 1, cfg.fc6_dilation, rng);
    fc7 = ConvBnRelu(name + ".fc7", cfg.top_channels, cfg.top_channels, 1, 1, 1, rng);
}

void EncoderParams::collect(ParamRegistry& r) {
    for (auto& s : stages) s.collect(r);
    fc6.collect(r);
    fc7.collect(r);
}

EncoderOut encoder_forward(Tape& t, Var image, EncoderParams& p, bool train) {
    const Tensor& ti = t.val(image);
    if (ti.rank() != 3 || ti.dim(0) != 3)
        throw ShapeError("encoder_forward: input must be 3xHxW, got " + ti.shape_str());
    if (ti.dim(1) % 8 != 0 || ti.dim(2) % 8 != 0)
        throw ConfigError("encoder_forward: spatial size must be divisible by 8, got " +
                          ti.shape_str());
    EncoderOut out;
    Var x = image;
    for (int i = 0; i < 5; ++i) {
        x = p.stages[static_cast<size_t>(i)].apply(t, x, train);
        out.skips[static_cast<size_t>(i)] = x;
        if (i < 3) x = t.maxpool(x, 2, 2);
    }
    out.top = p.fc7.apply(t, p.fc6.apply(t, x, train), train);
    return out;
}

DenseAsppParams::DenseAsppParams(const std::string& name, const NetworkConfig& cfg, Rng& rng) {
    compress_in = ConvBnRelu(name + ".in", cfg.top_channels, cfg.aspp_compress, 1, 1, 1, rng);
    for (int i = 0; i < 3; ++i) {
        const int in_ch = cfg.aspp_compress + i * cfg.aspp_branch_channels;
        branches[static_cast<size_t>(i)] = ConvBnRelu(name + ".b" + std::to_string(i + 1), in_ch,
                                                      cfg.aspp_branch_channels, 3, 1,
                                                      cfg.aspp_dilations[static_cast<size_t>(i)], rng);
    }
    const int cat_ch = 2 * cfg.aspp_compress + 3 * cfg.aspp_branch_channels;
    compress_out = ConvBnRelu(name + ".out", cat_ch, cfg.aspp_compress, 1, 1, 1, rng);
}

void DenseAsppParams::collect(ParamRegistry& r) {
    compress_in.collect(r);
    for (auto& b : branches) b.collect(r);
    compress_out.collect(r);
}

Var dense_aspp(Tape& t, Var f, DenseAsppParams& p, bool train) {
    const Tensor& tf = t.val(f);
    const int h = tf.dim(1), w = tf.dim(2);
    Var x = p.compress_in.apply(t, f, train);
    std::vector<Var> feats{x};
    for (auto& branch : p.branches) {
        Var in = feats.size() == 1 ? feats[0] : t.concat_ch(feats);
        feats.push_back(branch.apply(t, in, train));
    }
    Var global = t.upsample_bilinear(t.global_avgpool(x), h, w);
    feats.push_back(global);
    return p.compress_out.apply(t, t.concat_ch(feats), train);
}

DecoderPair::DecoderPair(const std::string& name, int idx, int c_prev, int c_skip, int c_out,
                         const NetworkConfig& cfg, Rng& rng) {
    const int c_in = c_prev + c_skip;
    r_conv1 = ConvBnRelu(name + ".r.c1", c_in, c_out, 3, 1, 1, rng);
    r_conv2 = ConvBnRelu(name + ".r.c2", c_out, c_out, 3, 1, 1, rng);
    d_conv1 = ConvBnRelu(name + ".d.c1", c_in, c_out, 3, 1, 1, rng);
    d_conv2 = ConvBnRelu(name + ".d.c2", c_out, c_out, 3, 1, 1, rng);
    use_sma = idx <= cfg.sma_decoders;
    pool_kv = idx == 3; // third decoder sits at 1/4 input size
    if (use_sma) {
        sma = SmaParams(name + ".sma", c_out, default_embed_channels(c_out), rng);
    } else {
        fuse = Conv2dLayer(name + ".fuse", 2 * c_out, c_out, 3, 1, 1, rng);
    }
    r_head = Conv2dLayer(name + ".r.head", c_out, 1, 3, 1, 1, rng);
    d_head = Conv2dLayer(name + ".d.head", c_out, 1, 3, 1, 1, rng);
}

void DecoderPair::collect(ParamRegistry& r) {
    r_conv1.collect(r);
    r_conv2.collect(r);
    d_conv1.collect(r);
    d_conv2.collect(r);
    if (use_sma)
        sma.collect(r);
    else
        fuse.collect(r);
    r_head.collect(r);
    d_head.collect(r);
}

TwoStreamState::TwoStreamState(const NetworkConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(seed);
    enc_r = EncoderParams("enc_r", cfg, rng);
    enc_d = EncoderParams("enc_d", cfg, rng);
    aspp_r = DenseAsppParams("aspp_r", cfg, rng);
    aspp_d = DenseAsppParams("aspp_d", cfg, rng);
    const int c_top = cfg.aspp_compress;
    smac = MacParams("smac", c_top, default_embed_channels(c_top), rng);
    const int top_hw = cfg.input_size / 8;
    sel = SelectiveHeadParams("sel", c_top, top_hw, top_hw, rng);
    post_nl_r = NlParams("post_nl_r", c_top, default_embed_channels(c_top), rng);
    post_nl_d = NlParams("post_nl_d", c_top, default_embed_channels(c_top), rng);
    int c_prev = c_top;
    for (int idx = 1; idx <= 5; ++idx) {
        const int c_skip = cfg.stage_channels[static_cast<size_t>(5 - idx)];
        const int c_out = cfg.decoder_out_channels(idx);
        decoders[static_cast<size_t>(idx - 1)] =
            DecoderPair("dec" + std::to_string(idx), idx, c_prev, c_skip, c_out, cfg, rng);
        c_prev = c_out;
    }

    enc_r.collect(registry);
    enc_d.collect(registry);
    aspp_r.collect(registry);
    aspp_d.collect(registry);
    smac.collect(registry);
    sel.collect(registry);
    post_nl_r.collect(registry);
    post_nl_d.collect(registry);
    for (auto& d : decoders) d.collect(registry);
}

FusionOut fusion_stage(Tape& t, Var top_r, Var top_d, TwoStreamState& s, const ForwardOptions& o) {
    SmacBlockOut sm = smac_block(t, top_r, top_d, s.smac, s.sel, o.train, o.alpha_override);
    Var z_r = nl_block(t, sm.z_r, s.post_nl_r).z;
    Var z_d = nl_block(t, sm.z_d, s.post_nl_d).z;
    return {z_r, z_d, sm.alpha};
}

std::pair<Var, Var> decoder_step(Tape& t, Var prev_r, Var prev_d, Var skip_r, Var skip_d,
                                 DecoderPair& dec, Var alpha, bool train) {
    const Tensor& ts = t.val(skip_r);
    const int h = ts.dim(1), w = ts.dim(2);
    if (t.val(prev_r).dim(1) != h || t.val(prev_r).dim(2) != w) {
        prev_r = t.upsample_bilinear(prev_r, h, w);
        prev_d = t.upsample_bilinear(prev_d, h, w);
    }
    Var out_r = dec.r_conv2.apply(t, dec.r_conv1.apply(t, t.concat_ch({skip_r, prev_r}), train), train);
    Var out_d = dec.d_conv2.apply(t, dec.d_conv1.apply(t, t.concat_ch({skip_d, prev_d}), train), train);
    if (dec.use_sma) {
        SmaBlockOut fused = sma_block(t, out_r, out_d, dec.sma, alpha, dec.pool_kv);
        return {fused.z_r, fused.z_d};
    }
    Var residual = dec.fuse.apply(t, t.concat_ch({out_r, out_d}));
    return {t.add(out_r, t.scale_by(residual, alpha)), out_d};
}

Var predict(Tape& t, Var decoder_out, Conv2dLayer& head) {
    return t.sigmoid(head.apply(t, decoder_out));
}

ForwardResult two_stream_forward(Tape& t, TwoStreamState& s, const Tensor& rgb,
                                 const Tensor& depth, const ForwardOptions& o) {
    if (!rgb.same_shape(depth))
        throw ShapeError("two_stream_forward: rgb " + rgb.shape_str() + " vs depth " +
                         depth.shape_str());
    Var in_r = t.leaf(rgb);
    Var in_d = t.leaf(depth);
    EncoderOut er = encoder_forward(t, in_r, s.enc_r, o.train);
    EncoderOut ed = encoder_forward(t, in_d, s.enc_d, o.train);
    Var top_r = dense_aspp(t, er.top, s.aspp_r, o.train);
    Var top_d = dense_aspp(t, ed.top, s.aspp_d, o.train);
    FusionOut fused = fusion_stage(t, top_r, top_d, s, o);

    ForwardResult res;
    res.alpha = fused.alpha;
    Var prev_r = fused.z_r;
    Var prev_d = fused.z_d;
    for (int idx = 1; idx <= 5; ++idx) {
        DecoderPair& dec = s.decoders[static_cast<size_t>(idx - 1)];
        Var skip_r = er.skips[static_cast<size_t>(5 - idx)];
        Var skip_d = ed.skips[static_cast<size_t>(5 - idx)];
        auto [out_r, out_d] = decoder_step(t, prev_r, prev_d, skip_r, skip_d, dec, fused.alpha, o.train);
        res.preds_r[static_cast<size_t>(idx - 1)] = predict(t, out_r, dec.r_head);
        res.preds_d[static_cast<size_t>(idx - 1)] = predict(t, out_d, dec.d_head);
        prev_r = out_r;
        prev_d = out_d;
    }
    res.final_map = t.upsample_bilinear(res.preds_r[4], rgb.dim(1), rgb.dim(2));
    return res;
}

Tensor resize_nearest(const Tensor& src, int out_h, int out_w) {
    if (src.rank() != 3) throw ShapeError("resize_nearest: input must be CxHxW");
    const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    Tensor out({c, out_h, out_w});
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < out_h; ++oy) {
            const int sy = std::min(h - 1, oy * h / out_h);
            for (int ox = 0; ox < out_w; ++ox) {
                const int sx = std::min(w - 1, ox * w / out_w);
                out.at3(ci, oy, ox) = src.at3(ci, sy, sx);
            }
        }
    return out;
}

Var deep_supervised_loss(Tape& t, const ForwardResult& f, const Tensor& gt,
                         const std::array<double, 5>& weights) {
    if (gt.rank() != 3 || gt.dim(0) != 1)
        throw ShapeError("deep_supervised_loss: gt must be 1xHxW, got " + gt.shape_str());
    for (int64_t i = 0; i < gt.numel(); ++i)
        if (gt[i] != 0.0 && gt[i] != 1.0)
            throw DataError("deep_supervised_loss: gt must be binary 0/1");
    Var total;
    for (int d = 0; d < 5; ++d) {
        const Tensor& pr = t.val(f.preds_r[static_cast<size_t>(d)]);
        Tensor gt_d = resize_nearest(gt, pr.dim(1), pr.dim(2));
        Var term_r = t.scale(t.bce_mean(f.preds_r[static_cast<size_t>(d)], gt_d), weights[static_cast<size_t>(d)]);
        Var term_d = t.scale(t.bce_mean(f.preds_d[static_cast<size_t>(d)], gt_d), weights[static_cast<size_t>(d)]);
        Var pair = t.add(term_r, term_d);
        total = total.valid() ? t.add(total, pair) : pair;
    }
    return total;
}

} // namespace smac
