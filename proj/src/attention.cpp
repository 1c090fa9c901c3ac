#include "attention.hpp"

#include <cmath>

#include "errors.hpp"

namespace smac {

NlParams::NlParams(const std::string& prefix, int c, int c_emb, Rng& rng)
    : w_theta(prefix + ".w_theta", uniform_init({c, c_emb}, c, rng)),
      w_phi(prefix + ".w_phi", uniform_init({c, c_emb}, c, rng)),
      w_g(prefix + ".w_g", uniform_init({c, c_emb}, c, rng)),
      w_z(prefix + ".w_z", Tensor::zeros({c_emb, c})) {}

void NlParams::collect(ParamRegistry& r) {
    r.add(w_theta);
    r.add(w_phi);
    r.add(w_g);
    r.add(w_z);
}

MacParams::MacParams(const std::string& prefix, int c, int c_emb, Rng& rng)
    : rgb(prefix + ".rgb", c, c_emb, rng),
      depth(prefix + ".depth", c, c_emb, rng),
      w_c_r(prefix + ".w_c_r", Tensor::zeros({c_emb, c})),
      w_c_d(prefix + ".w_c_d", Tensor::zeros({c_emb, c})),
      t_raw(prefix + ".t_raw", Tensor::zeros({1})) {}

void MacParams::collect(ParamRegistry& r) {
    rgb.collect(r);
    depth.collect(r);
    r.add(w_c_r);
    r.add(w_c_d);
    r.add(t_raw);
}

SmaParams::SmaParams(const std::string& prefix, int c, int c_emb, Rng& rng)
    : rgb(prefix + ".rgb", c, c_emb, rng), depth(prefix + ".depth", c, c_emb, rng) {}

void SmaParams::collect(ParamRegistry& r) {
    rgb.collect(r);
    depth.collect(r);
}

namespace {
int twice_halved(int n) { // two stride-2 "same" convs: ceil(ceil(n/2)/2)
    return ((n + 1) / 2 + 1) / 2;
}
} // namespace

SelectiveHeadParams::SelectiveHeadParams(const std::string& prefix, int c, int h, int w, Rng& rng)
    : est1(prefix + ".est1", c, c, 1, 1, 1, rng, /*with_bias=*/false),
      est2(prefix + ".est2", c, c, 1, 1, 1, rng),
      est1_bn(prefix + ".est1_bn", c),
      down1(prefix + ".down1", c, 256, 1, 2, 1, rng, /*with_bias=*/false),
      down2(prefix + ".down2", 256, 128, 1, 2, 1, rng, /*with_bias=*/false),
      down1_bn(prefix + ".down1_bn", 256),
      down2_bn(prefix + ".down2_bn", 128),
      fc1(prefix + ".fc1", 128 * twice_halved(h) * twice_halved(w), 256, rng),
      fc2(prefix + ".fc2", 256, 1, rng) {}

void SelectiveHeadParams::collect(ParamRegistry& r) {
    est1.collect(r);
    est2.collect(r);
    est1_bn.collect(r);
    down1.collect(r);
    down2.collect(r);
    down1_bn.collect(r);
    down2_bn.collect(r);
    fc1.collect(r);
    fc2.collect(r);
}

Var chw_to_mat(Tape& t, Var x) {
    const Tensor& tx = t.val(x);
    if (tx.rank() != 3) throw ShapeError("chw_to_mat: input must be CxHxW, got " + tx.shape_str());
    const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    return t.transpose2d(t.reshape(x, {c, h * w}));
}

Var mat_to_chw(Tape& t, Var m, int c, int h, int w) {
    return t.reshape(t.transpose2d(m), {c, h, w});
}

namespace {

struct Embeds {
    Var theta, phi, g; // [HW x C']
};

Embeds embed(Tape& t, Var x_mat, NlParams& p) {
    return {t.matmul(x_mat, t.param(p.w_theta)),
            t.matmul(x_mat, t.param(p.w_phi)),
            t.matmul(x_mat, t.param(p.w_g))};
}

Var affinity(Tape& t, Var theta, Var phi) { return t.matmul(theta, t.transpose2d(phi)); }

void check_pair(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("cross-modal inputs must share a shape, got " + a.shape_str() + " and " +
                         b.shape_str());
}

} // namespace

NlBlockOut nl_block(Tape& t, Var x, NlParams& p) {
    const Tensor& tx = t.val(x);
    const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    Var x_mat = chw_to_mat(t, x);
    Embeds e = embed(t, x_mat, p);
    Var a = t.softmax_rows(affinity(t, e.theta, e.phi));
    Var y = t.matmul(a, e.g);
    Var z_mat = t.add(x_mat, t.matmul(y, t.param(p.w_z)));
    return {mat_to_chw(t, z_mat, c, h, w), a};
}

MutualAttentionOut mutual_attention(Tape& t, Var x_r, Var x_d, MacParams& p) {
    const Tensor& tr = t.val(x_r);
    check_pair(tr, t.val(x_d));
    const int c_emb = p.rgb.embed_channels();
    const int h = tr.dim(1), w = tr.dim(2);
    Var r_mat = chw_to_mat(t, x_r);
    Var d_mat = chw_to_mat(t, x_d);
    Embeds er = embed(t, r_mat, p.rgb);
    Embeds ed = embed(t, d_mat, p.depth);
    Var a_r = t.softmax_rows(affinity(t, er.theta, er.phi));
    Var a_d = t.softmax_rows(affinity(t, ed.theta, ed.phi));
    Var y_r = t.matmul(a_d, er.g); // value modality and attention modality swapped
    Var y_d = t.matmul(a_r, ed.g);
    return {mat_to_chw(t, y_r, c_emb, h, w), mat_to_chw(t, y_d, c_emb, h, w), a_r, a_d};
}

Var contrast_attention(Tape& t, Var f, Var t_raw) {
    // -f / T with T = exp(t_raw); written as -f * exp(-t_raw)
    Var inv_temp = t.exp(t.scale(t_raw, -1.0));
    return t.softmax_rows(t.scale(t.scale_by(f, inv_temp), -1.0));
}

Var contrast_attention(Tape& t, Var f, double temperature) {
    if (temperature <= 0)
        throw NumericError("contrast_attention: temperature must be positive, got " +
                           std::to_string(temperature));
    return t.softmax_rows(t.scale(f, -1.0 / temperature));
}

MacBlockOut mac_block(Tape& t, Var x_r, Var x_d, MacParams& p) {
    const Tensor& tr = t.val(x_r);
    check_pair(tr, t.val(x_d));
    const int c = tr.dim(0), h = tr.dim(1), w = tr.dim(2);
    Var r_mat = chw_to_mat(t, x_r);
    Var d_mat = chw_to_mat(t, x_d);
    Embeds er = embed(t, r_mat, p.rgb);
    Embeds ed = embed(t, d_mat, p.depth);
    Var f_r = affinity(t, er.theta, er.phi);
    Var f_d = affinity(t, ed.theta, ed.phi);
    Var a_r = t.softmax_rows(f_r);
    Var a_d = t.softmax_rows(f_d);
    Var c_r = contrast_attention(t, f_r, t.param(p.t_raw));
    Var c_d = contrast_attention(t, f_d, t.param(p.t_raw));

    Var z_r = t.add(r_mat, t.sub(t.matmul(t.matmul(a_d, er.g), t.param(p.rgb.w_z)),
                                 t.matmul(t.matmul(c_d, er.g), t.param(p.w_c_r))));
    Var z_d = t.add(d_mat, t.sub(t.matmul(t.matmul(a_r, ed.g), t.param(p.depth.w_z)),
                                 t.matmul(t.matmul(c_r, ed.g), t.param(p.w_c_d))));
    return {mat_to_chw(t, z_r, c, h, w), mat_to_chw(t, z_d, c, h, w), a_r, a_d, c_r, c_d};
}

Var selective_alpha(Tape& t, Var x_r, Var x_d, SelectiveHeadParams& p, bool train) {
    const Tensor& tr = t.val(x_r);
    check_pair(tr, t.val(x_d));
    if (tr.dim(1) < 4 || tr.dim(2) < 4)
        throw ShapeError("selective_alpha: spatial size " + tr.shape_str() +
                         " too small for two stride-2 downsamplings");
    Var est = t.relu(p.est1_bn.apply(t, p.est1.apply(t, x_r), train));
    est = p.est2.apply(t, est);
    Var err = t.sub(x_d, est);
    Var d1 = t.relu(p.down1_bn.apply(t, p.down1.apply(t, err), train));
    Var d2 = t.relu(p.down2_bn.apply(t, p.down2.apply(t, d1), train));
    Var hidden = t.relu(p.fc1.apply(t, d2));
    return t.sigmoid(p.fc2.apply(t, hidden));
}

SmacBlockOut smac_block(Tape& t, Var x_r, Var x_d, MacParams& p, SelectiveHeadParams& s,
                        bool train, double alpha_override) {
    const Tensor& tr = t.val(x_r);
    check_pair(tr, t.val(x_d));
    const int c = tr.dim(0), h = tr.dim(1), w = tr.dim(2);
    Var alpha = alpha_override >= 0.0 ? t.leaf(Tensor::scalar(alpha_override))
                                      : selective_alpha(t, x_r, x_d, s, train);

    Var r_mat = chw_to_mat(t, x_r);
    Var d_mat = chw_to_mat(t, x_d);
    Embeds er = embed(t, r_mat, p.rgb);
    Embeds ed = embed(t, d_mat, p.depth);
    Var f_r = affinity(t, er.theta, er.phi);
    Var f_d = affinity(t, ed.theta, ed.phi);
    Var a_r = t.softmax_rows(f_r);
    Var a_d = t.softmax_rows(f_d);
    Var c_r = contrast_attention(t, f_r, t.param(p.t_raw));
    Var c_d = contrast_attention(t, f_d, t.param(p.t_raw));

    // The depth-derived terms on the RGB side are the ones reweighted by alpha;
    // the depth output keeps the unweighted form.
    Var r_term = t.sub(t.matmul(t.matmul(a_d, er.g), t.param(p.rgb.w_z)),
                       t.matmul(t.matmul(c_d, er.g), t.param(p.w_c_r)));
    Var z_r = t.add(r_mat, t.scale_by(r_term, alpha));
    Var z_d = t.add(d_mat, t.sub(t.matmul(t.matmul(a_r, ed.g), t.param(p.depth.w_z)),
                                 t.matmul(t.matmul(c_r, ed.g), t.param(p.w_c_d))));
    return {mat_to_chw(t, z_r, c, h, w), mat_to_chw(t, z_d, c, h, w), alpha, a_r, a_d, c_r, c_d};
}

SmaBlockOut sma_block(Tape& t, Var x_r, Var x_d, SmaParams& p, Var alpha, bool downsample_kv) {
    const Tensor& tr = t.val(x_r);
    check_pair(tr, t.val(x_d));
    const int c = tr.dim(0), h = tr.dim(1), w = tr.dim(2);
    const int c_emb = p.rgb.embed_channels();
    if (downsample_kv && (h % 2 != 0 || w % 2 != 0))
        throw ShapeError("sma_block: downsample_kv requires even spatial size, got " +
                         tr.shape_str());

    Var r_mat = chw_to_mat(t, x_r);
    Var d_mat = chw_to_mat(t, x_d);
    Embeds er = embed(t, r_mat, p.rgb);
    Embeds ed = embed(t, d_mat, p.depth);

    auto pool_kv = [&](Var m) {
        if (!downsample_kv) return m;
        Var chw = mat_to_chw(t, m, c_emb, h, w);
        return chw_to_mat(t, t.maxpool(chw, 2, 2));
    };
    Var a_r = t.softmax_rows(affinity(t, er.theta, pool_kv(er.phi)));
    Var a_d = t.softmax_rows(affinity(t, ed.theta, pool_kv(ed.phi)));
    Var y_r = t.matmul(a_d, pool_kv(er.g));
    Var y_d = t.matmul(a_r, pool_kv(ed.g));

    Var z_r = t.add(r_mat, t.scale_by(t.matmul(y_r, t.param(p.rgb.w_z)), alpha));
    Var z_d = t.add(d_mat, t.matmul(y_d, t.param(p.depth.w_z)));
    return {mat_to_chw(t, z_r, c, h, w), mat_to_chw(t, z_d, c, h, w), a_r, a_d};
}

} // namespace smac
