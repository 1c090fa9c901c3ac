#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "errors.hpp"

namespace smac {

void TrainConfig::validate() const {
    if (lr0 < 0 || weight_decay < 0 || momentum < 0 || momentum >= 1)
        throw ConfigError("invalid optimizer constants");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
    if (!(decay_point1 > 0 && decay_point1 < decay_point2 && decay_point2 < 1))
        throw ConfigError("decay points must be strictly increasing within (0,1)");
    if (decay_factor <= 0 || decay_factor > 1) throw ConfigError("decay_factor must be in (0,1]");
    if (crop_from < 1.0) throw ConfigError("crop_from must be >= 1");
    if (hflip_prob < 0 || hflip_prob > 1) throw ConfigError("hflip_prob must be in [0,1]");
}

PreprocessedSample preprocess(const Sample& s, bool depth_invert) {
    if (s.rgb.size() != static_cast<size_t>(s.width) * s.height * 3 ||
        s.depth.size() != static_cast<size_t>(s.width) * s.height ||
        (s.has_gt() && s.gt.size() != static_cast<size_t>(s.width) * s.height))
        throw DataError("preprocess: sample planes do not share a size");
    const int h = s.height, w = s.width;
    const int64_t hw = static_cast<int64_t>(h) * w;

    PreprocessedSample out;
    out.rgb = Tensor({3, h, w});
    for (int64_t i = 0; i < hw; ++i)
        for (int c = 0; c < 3; ++c)
            out.rgb[c * hw + i] = static_cast<double>(s.rgb[static_cast<size_t>(i) * 3 + c]);

    // depth: invert first, then min-max rescale to [0,255]
    std::vector<double> d(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) {
        const double v = static_cast<double>(s.depth[static_cast<size_t>(i)]);
        d[static_cast<size_t>(i)] = depth_invert ? 255.0 - v : v;
    }
    const auto [mn_it, mx_it] = std::minmax_element(d.begin(), d.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx > mn) {
        const double scale = 255.0 / (mx - mn);
        for (double& v : d) v = (v - mn) * scale;
    } else {
        for (double& v : d) v = 128.0;
    }
    out.depth = Tensor({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int64_t i = 0; i < hw; ++i) out.depth[c * hw + i] = d[static_cast<size_t>(i)];

    for (Tensor* t : {&out.rgb, &out.depth}) {
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (int64_t i = 0; i < hw; ++i) mean += (*t)[c * hw + i];
            mean /= static_cast<double>(hw);
            for (int64_t i = 0; i < hw; ++i) (*t)[c * hw + i] -= mean;
        }
    }

    if (s.has_gt()) {
        out.gt = Tensor({1, h, w});
        for (int64_t i = 0; i < hw; ++i) out.gt[i] = s.gt[static_cast<size_t>(i)] >= 128 ? 1.0 : 0.0;
    }
    return out;
}

namespace {

// Bilinear byte-plane resize, align-corners=false, rounded back to bytes.
std::vector<uint8_t> resize_bilinear_bytes(const std::vector<uint8_t>& src, int h, int w,
                                           int channels, int oh, int ow) {
    std::vector<uint8_t> dst(static_cast<size_t>(oh) * ow * channels);
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < channels; ++c) {
                auto at = [&](int yy, int xx) {
                    return static_cast<double>(src[(static_cast<size_t>(yy) * w + xx) * channels + c]);
                };
                const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                                 wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
                dst[(static_cast<size_t>(y) * ow + x) * channels + c] =
                    static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return dst;
}

std::vector<uint8_t> resize_nearest_bytes(const std::vector<uint8_t>& src, int h, int w, int oh,
                                          int ow) {
    std::vector<uint8_t> dst(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        const int sy = std::min(h - 1, y * h / oh);
        for (int x = 0; x < ow; ++x) {
            const int sx = std::min(w - 1, x * w / ow);
            dst[static_cast<size_t>(y) * ow + x] = src[static_cast<size_t>(sy) * w + sx];
        }
    }
    return dst;
}

Sample resize_to(const Sample& s, int oh, int ow) {
    Sample out;
    out.width = ow;
    out.height = oh;
    out.rgb = resize_bilinear_bytes(s.rgb, s.height, s.width, 3, oh, ow);
    out.depth = resize_bilinear_bytes(s.depth, s.height, s.width, 1, oh, ow);
    if (s.has_gt()) out.gt = resize_nearest_bytes(s.gt, s.height, s.width, oh, ow);
    return out;
}

void crop_plane(const std::vector<uint8_t>& src, int w, int channels, int oy, int ox, int size,
                std::vector<uint8_t>& dst) {
    dst.resize(static_cast<size_t>(size) * size * channels);
    for (int y = 0; y < size; ++y) {
        const uint8_t* row = src.data() + (static_cast<size_t>(oy + y) * w + ox) * channels;
        std::copy(row, row + static_cast<size_t>(size) * channels,
                  dst.begin() + static_cast<size_t>(y) * size * channels);
    }
}

void hflip_plane(std::vector<uint8_t>& p, int h, int w, int channels) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x)
            for (int c = 0; c < channels; ++c)
                std::swap(p[(static_cast<size_t>(y) * w + x) * channels + c],
                          p[(static_cast<size_t>(y) * w + (w - 1 - x)) * channels + c]);
}

} // namespace

Sample resize_sample(const Sample& s, int size) { return resize_to(s, size, size); }

Sample augment(const Sample& s, int size, double crop_from, double hflip_prob, Rng& rng) {
    const int big = std::max(size, static_cast<int>(std::lround(crop_from * size)));
    Sample resized = resize_to(s, big, big);
    const int span = big - size;
    const int oy = span > 0 ? rng.uniform_int(span + 1) : 0;
    const int ox = span > 0 ? rng.uniform_int(span + 1) : 0;
    Sample out;
    out.width = size;
    out.height = size;
    crop_plane(resized.rgb, big, 3, oy, ox, size, out.rgb);
    crop_plane(resized.depth, big, 1, oy, ox, size, out.depth);
    if (resized.has_gt()) crop_plane(resized.gt, big, 1, oy, ox, size, out.gt);
    if (rng.bernoulli(hflip_prob)) {
        hflip_plane(out.rgb, size, size, 3);
        hflip_plane(out.depth, size, size, 1);
        if (out.has_gt()) hflip_plane(out.gt, size, size, 1);
    }
    return out;
}

double lr_schedule(int iter, const TrainConfig& cfg) {
    const double frac = static_cast<double>(iter) / cfg.total_iters;
    if (frac < cfg.decay_point1) return cfg.lr0;
    if (frac < cfg.decay_point2) return cfg.lr0 * cfg.decay_factor;
    return cfg.lr0 * cfg.decay_factor * cfg.decay_factor;
}

void sgd_step(const std::vector<Parameter*>& params, const TrainConfig& cfg, int iter) {
    const double lr = lr_schedule(iter, cfg);
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        const int64_t n = p->value.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double g = p->grad[i];
            if (std::isnan(g))
                throw NumericError("NaN gradient in parameter " + p->name + "[" +
                                   std::to_string(i) + "]");
            const double v = cfg.momentum * p->momentum[i] + g + cfg.weight_decay * p->value[i];
            p->momentum[i] = v;
            p->value[i] -= lr * v;
        }
        p->zero_grad();
    }
}

TrainResult train_loop(TwoStreamState& model, const std::vector<Sample>& data,
                       const TrainConfig& cfg, const std::string& loss_curve_path,
                       const std::function<void(int, double)>& progress) {
    cfg.validate();
    if (data.empty()) throw DataError("train_loop: empty dataset");
    const int size = model.cfg.input_size;
    for (const Sample& s : data)
        if (!s.has_gt()) throw DataError("train_loop: sample without ground truth");

    Rng rng(cfg.seed);
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    auto reshuffle = [&]() {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    };
    reshuffle();
    size_t cursor = 0;

    TrainResult result;
    result.losses.reserve(static_cast<size_t>(cfg.total_iters));
    for (int iter = 0; iter < cfg.total_iters; ++iter) {
        Tape tape;
        Var batch_loss;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                reshuffle();
                cursor = 0;
            }
            const Sample& raw = data[static_cast<size_t>(order[cursor++])];
            Sample aug = augment(raw, size, cfg.crop_from, cfg.hflip_prob, rng);
            PreprocessedSample pre = preprocess(aug, cfg.depth_invert);
            ForwardOptions opts;
            opts.train = true;
            ForwardResult fwd = two_stream_forward(tape, model, pre.rgb, pre.depth, opts);
            Var loss = deep_supervised_loss(tape, fwd, pre.gt, model.cfg.loss_weights);
            batch_loss = batch_loss.valid() ? tape.add(batch_loss, loss) : loss;
        }
        if (cfg.batch > 1) batch_loss = tape.scale(batch_loss, 1.0 / cfg.batch);

        const double loss_value = tape.val(batch_loss)[0];
        if (!std::isfinite(loss_value))
            throw NumericError("non-finite loss at iteration " + std::to_string(iter));
        tape.backward(batch_loss);
        sgd_step(model.registry.params, cfg, iter);

        result.losses.push_back(loss_value);
        if (iter == 0) result.initial_loss = loss_value;
        result.final_loss = loss_value;
        if (progress) progress(iter, loss_value);
    }

    if (!loss_curve_path.empty()) {
        std::ofstream out(loss_curve_path, std::ios::trunc);
        if (!out) throw DataError("cannot write loss curve to " + loss_curve_path);
        char line[64];
        for (size_t i = 0; i < result.losses.size(); ++i) {
            std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, result.losses[i]);
            out << line;
        }
    }
    return result;
}

} // namespace smac
