#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace smac {

namespace {

void check_inputs(const Tensor& pred, const Tensor& gt) {
    if (pred.rank() != 2 || gt.rank() != 2)
        throw ShapeError("metrics: inputs must be rank-2 maps");
    if (!pred.same_shape(gt))
        throw ShapeError("metrics: size mismatch " + pred.shape_str() + " vs " + gt.shape_str());
}

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
    return s / static_cast<double>(t.numel());
}

int64_t count_fg(const Tensor& gt) {
    int64_t n = 0;
    for (int64_t i = 0; i < gt.numel(); ++i)
        if (gt[i] > 0.5) ++n;
    return n;
}

} // namespace

double mae(const Tensor& pred, const Tensor& gt) {
    check_inputs(pred, gt);
    double s = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) s += std::fabs(pred[i] - gt[i]);
    return s / static_cast<double>(pred.numel());
}

std::optional<double> max_f_measure(const Tensor& pred, const Tensor& gt, double beta2,
                                    int thresholds) {
    check_inputs(pred, gt);
    const int64_t n = pred.numel();
    const int64_t gt_pos = count_fg(gt);
    if (gt_pos == 0) return std::nullopt;

    // One histogram pass instead of 255 sweeps: bucket pred by the smallest
    // threshold that excludes it.
    std::vector<int64_t> tp_hist(static_cast<size_t>(thresholds) + 1, 0);
    std::vector<int64_t> pos_hist(static_cast<size_t>(thresholds) + 1, 0);
    for (int64_t i = 0; i < n; ++i) {
        // bucket b means pred >= b/thresholds but < (b+1)/thresholds
        int b = static_cast<int>(std::floor(pred[i] * thresholds));
        b = std::clamp(b, 0, thresholds);
        pos_hist[static_cast<size_t>(b)]++;
        if (gt[i] > 0.5) tp_hist[static_cast<size_t>(b)]++;
    }
    double best = 0.0;
    int64_t tp = 0, predicted = 0;
    // sweep thresholds t = k/thresholds from high to low; bucket b >= k passes
    for (int k = thresholds; k >= 1; --k) {
        tp += tp_hist[static_cast<size_t>(k)];
        predicted += pos_hist[static_cast<size_t>(k)];
        if (predicted == 0) continue; // empty prediction scores 0
        const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
        const double recall = static_cast<double>(tp) / static_cast<double>(gt_pos);
        if (precision + recall == 0.0) continue;
        const double f = (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
        best = std::max(best, f);
    }
    return best;
}

namespace {

// object-level similarity of Fan et al.'s structure measure
double object_score(const Tensor& pred, const Tensor& gt, bool foreground) {
    // x = mean, sigma = sample std of (fg ? pred : 1-pred) restricted to the region
    int64_t n = 0;
    double sum = 0.0;
    for (int64_t i = 0; i < gt.numel(); ++i) {
        const bool in = foreground ? gt[i] > 0.5 : gt[i] <= 0.5;
        if (!in) continue;
        ++n;
        sum += foreground ? pred[i] : 1.0 - pred[i];
    }
    if (n == 0) return 0.0;
    const double x = sum / static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < gt.numel(); ++i) {
        const bool in = foreground ? gt[i] > 0.5 : gt[i] <= 0.5;
        if (!in) continue;
        const double v = (foreground ? pred[i] : 1.0 - pred[i]) - x;
        var += v * v;
    }
    const double sigma = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + 1e-20);
}

double s_object(const Tensor& pred, const Tensor& gt) {
    const double mu = mean_of(gt);
    return mu * object_score(pred, gt, true) + (1.0 - mu) * object_score(pred, gt, false);
}

// SSIM-style similarity of one block pair
double block_ssim(const Tensor& pred, const Tensor& gt, int y0, int y1, int x0, int x1) {
    const int64_t n = static_cast<int64_t>(y1 - y0) * (x1 - x0);
    if (n == 0) return 0.0;
    double mx = 0.0, my = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            mx += pred.at2(y, x);
            my += gt.at2(y, x);
        }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0, vxy = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = pred.at2(y, x) - mx;
            const double dy = gt.at2(y, x) - my;
            vx += dx * dx;
            vy += dy * dy;
            vxy += dx * dy;
        }
    const double denom_n = n > 1 ? static_cast<double>(n - 1) : 1.0;
    vx /= denom_n;
    vy /= denom_n;
    vxy /= denom_n;
    const double alpha = 4.0 * mx * my * vxy;
    const double beta = (mx * mx + my * my) * (vx + vy);
    if (alpha != 0.0) return alpha / (beta + 1e-20);
    return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const Tensor& pred, const Tensor& gt) {
    const int h = gt.dim(0), w = gt.dim(1);
    // centroid of the gt foreground
    double cy = 0.0, cx = 0.0;
    int64_t n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (gt.at2(y, x) > 0.5) {
                cy += y;
                cx += x;
                ++n;
            }
    int split_y, split_x;
    if (n == 0) {
        split_y = h / 2;
        split_x = w / 2;
    } else {
        split_y = static_cast<int>(std::lround(cy / static_cast<double>(n))) + 1;
        split_x = static_cast<int>(std::lround(cx / static_cast<double>(n))) + 1;
    }
    split_y = std::clamp(split_y, 1, h - 1 > 0 ? h - 1 : 1);
    split_x = std::clamp(split_x, 1, w - 1 > 0 ? w - 1 : 1);
    const double total = static_cast<double>(h) * w;
    double score = 0.0;
    const int ys[3] = {0, split_y, h};
    const int xs[3] = {0, split_x, w};
    for (int by = 0; by < 2; ++by)
        for (int bx = 0; bx < 2; ++bx) {
            const int y0 = ys[by], y1 = ys[by + 1];
            const int x0 = xs[bx], x1 = xs[bx + 1];
            const double weight = static_cast<double>(y1 - y0) * (x1 - x0) / total;
            score += weight * block_ssim(pred, gt, y0, y1, x0, x1);
        }
    return score;
}

} // namespace

double s_measure(const Tensor& pred, const Tensor& gt, double alpha) {
    check_inputs(pred, gt);
    const int64_t fg = count_fg(gt);
    if (fg == 0) return 1.0 - mean_of(pred);         // empty gt
    if (fg == gt.numel()) return mean_of(pred);      // full gt
    const double s = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt);
    return std::max(s, 0.0);
}

namespace {

double e_measure_binary(const std::vector<char>& fm, const Tensor& gt, int64_t gt_pos) {
    const int64_t n = gt.numel();
    if (gt_pos == 0 || gt_pos == n) {
        // degenerate gt: 1 - mean|fm - gt|
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i)
            s += std::fabs(static_cast<double>(fm[static_cast<size_t>(i)]) - gt[i]);
        return 1.0 - s / static_cast<double>(n);
    }
    double mean_fm = 0.0;
    for (int64_t i = 0; i < n; ++i) mean_fm += fm[static_cast<size_t>(i)];
    mean_fm /= static_cast<double>(n);
    const double mean_gt = static_cast<double>(gt_pos) / static_cast<double>(n);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double pf = static_cast<double>(fm[static_cast<size_t>(i)]) - mean_fm;
        const double pg = gt[i] - mean_gt;
        const double denom = pf * pf + pg * pg;
        const double xi = denom > 0.0 ? 2.0 * pf * pg / denom : 0.0;
        acc += (1.0 + xi) * (1.0 + xi) / 4.0;
    }
    return acc / static_cast<double>(n);
}

} // namespace

double e_measure(const Tensor& pred, const Tensor& gt, int thresholds) {
    check_inputs(pred, gt);
    const int64_t n = pred.numel();
    const int64_t gt_pos = count_fg(gt);
    double best = 0.0;
    std::vector<char> fm(static_cast<size_t>(n));
    for (int k = 1; k <= thresholds; ++k) {
        const double t = static_cast<double>(k) / thresholds;
        for (int64_t i = 0; i < n; ++i) fm[static_cast<size_t>(i)] = pred[i] >= t ? 1 : 0;
        best = std::max(best, e_measure_binary(fm, gt, gt_pos));
    }
    return best;
}

MetricsReport aggregate(std::vector<ImageMetrics> rows) {
    MetricsReport rep;
    rep.per_image = std::move(rows);
    rep.n_images = static_cast<int>(rep.per_image.size());
    int defined = 0;
    for (const ImageMetrics& m : rep.per_image) {
        rep.mean_sm += m.sm;
        rep.mean_e += m.e;
        rep.mean_mae += m.mae;
        if (m.max_f) {
            rep.mean_maxf += *m.max_f;
            ++defined;
        } else {
            ++rep.n_undefined_maxf;
        }
    }
    if (rep.n_images > 0) {
        rep.mean_sm /= rep.n_images;
        rep.mean_e /= rep.n_images;
        rep.mean_mae /= rep.n_images;
    }
    if (defined > 0) rep.mean_maxf /= defined;
    return rep;
}

Tensor resize_bilinear_2d(const Tensor& src, int out_h, int out_w) {
    if (src.rank() != 2) throw ShapeError("resize_bilinear_2d: input must be rank-2");
    const int h = src.dim(0), w = src.dim(1);
    Tensor out({out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            out.at2(y, x) = (1 - wy) * ((1 - wx) * src.at2(y0, x0) + wx * src.at2(y0, x1)) +
                            wy * ((1 - wx) * src.at2(y1, x0) + wx * src.at2(y1, x1));
        }
    }
    return out;
}

} // namespace smac
