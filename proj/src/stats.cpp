#include "stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "errors.hpp"
#include "metrics.hpp"

namespace smac {

double chi2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("chi2_distance: histogram size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] + b[i];
        if (t <= 0.0) continue;
        const double d = a[i] - b[i];
        s += d * d / t;
    }
    return 0.5 * s;
}

double entropy_nats(const std::vector<double>& hist) {
    double total = 0.0;
    for (double v : hist) total += v;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double v : hist) {
        if (v <= 0.0) continue;
        const double p = v / total;
        h -= p * std::log(p);
    }
    return h;
}

namespace {

void require_gt(const Sample& s) {
    if (!s.has_gt()) throw DataError("statistics require a ground-truth mask");
}

void normalize(std::vector<double>& h) {
    double total = 0.0;
    for (double v : h) total += v;
    if (total > 0.0)
        for (double& v : h) v /= total;
}

int64_t plane_size(const Sample& s) { return static_cast<int64_t>(s.width) * s.height; }

} // namespace

std::vector<double> color_histogram(const Sample& s, bool foreground) {
    require_gt(s);
    std::vector<double> hist(512, 0.0);
    const int64_t n = plane_size(s);
    for (int64_t i = 0; i < n; ++i) {
        const bool fg = s.gt[static_cast<size_t>(i)] >= 128;
        if (fg != foreground) continue;
        const uint8_t r = s.rgb[static_cast<size_t>(i) * 3];
        const uint8_t g = s.rgb[static_cast<size_t>(i) * 3 + 1];
        const uint8_t b = s.rgb[static_cast<size_t>(i) * 3 + 2];
        hist[static_cast<size_t>((r >> 5) * 64 + (g >> 5) * 8 + (b >> 5))] += 1.0;
    }
    return hist;
}

std::vector<double> depth_histogram(const Sample& s, bool foreground) {
    require_gt(s);
    std::vector<double> hist(256, 0.0);
    const int64_t n = plane_size(s);
    for (int64_t i = 0; i < n; ++i) {
        const bool fg = s.gt[static_cast<size_t>(i)] >= 128;
        if (fg != foreground) continue;
        hist[s.depth[static_cast<size_t>(i)]] += 1.0;
    }
    return hist;
}

namespace {

std::optional<double> chi2_fg_bg(std::vector<double> fg, std::vector<double> bg, bool normalized) {
    double fg_mass = 0.0, bg_mass = 0.0;
    for (double v : fg) fg_mass += v;
    for (double v : bg) bg_mass += v;
    if (fg_mass <= 0.0 || bg_mass <= 0.0) return std::nullopt;
    if (normalized) {
        normalize(fg);
        normalize(bg);
    }
    return chi2_distance(fg, bg);
}

} // namespace

std::optional<double> chi2_contrast_color(const Sample& s, bool normalized) {
    return chi2_fg_bg(color_histogram(s, true), color_histogram(s, false), normalized);
}

std::optional<double> chi2_contrast_depth(const Sample& s, bool normalized) {
    return chi2_fg_bg(depth_histogram(s, true), depth_histogram(s, false), normalized);
}

std::optional<double> interior_contrast_color(const Sample& s) {
    std::vector<double> h = color_histogram(s, true);
    double mass = 0.0;
    for (double v : h) mass += v;
    if (mass <= 0.0) return std::nullopt;
    return entropy_nats(h);
}

std::optional<double> interior_contrast_depth(const Sample& s) {
    std::vector<double> h = depth_histogram(s, true);
    double mass = 0.0;
    for (double v : h) mass += v;
    if (mass <= 0.0) return std::nullopt;
    return entropy_nats(h);
}

double object_size(const Sample& s) {
    require_gt(s);
    const int64_t n = plane_size(s);
    int64_t fg = 0;
    for (int64_t i = 0; i < n; ++i)
        if (s.gt[static_cast<size_t>(i)] >= 128) ++fg;
    return static_cast<double>(fg) / static_cast<double>(n);
}

namespace {

// Solves the 5x5 system M x = rhs by Gaussian elimination with partial pivoting.
bool solve5(std::array<std::array<double, 5>, 5> m, std::array<double, 5> rhs,
            std::array<double, 5>& x) {
    for (int col = 0; col < 5; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 5; ++r)
            if (std::fabs(m[static_cast<size_t>(r)][static_cast<size_t>(col)]) >
                std::fabs(m[static_cast<size_t>(pivot)][static_cast<size_t>(col)]))
                pivot = r;
        if (std::fabs(m[static_cast<size_t>(pivot)][static_cast<size_t>(col)]) < 1e-300) return false;
        std::swap(m[static_cast<size_t>(col)], m[static_cast<size_t>(pivot)]);
        std::swap(rhs[static_cast<size_t>(col)], rhs[static_cast<size_t>(pivot)]);
        for (int r = col + 1; r < 5; ++r) {
            const double f = m[static_cast<size_t>(r)][static_cast<size_t>(col)] /
                             m[static_cast<size_t>(col)][static_cast<size_t>(col)];
            rhs[static_cast<size_t>(r)] -= f * rhs[static_cast<size_t>(col)];
            for (int c = col; c < 5; ++c)
                m[static_cast<size_t>(r)][static_cast<size_t>(c)] -=
                    f * m[static_cast<size_t>(col)][static_cast<size_t>(c)];
        }
    }
    for (int r = 4; r >= 0; --r) {
        double s = rhs[static_cast<size_t>(r)];
        for (int c = r + 1; c < 5; ++c)
            s -= m[static_cast<size_t>(r)][static_cast<size_t>(c)] * x[static_cast<size_t>(c)];
        x[static_cast<size_t>(r)] = s / m[static_cast<size_t>(r)][static_cast<size_t>(r)];
    }
    return true;
}

double fit_cost(const Tensor& map, const std::array<double, 5>& p) {
    const int h = map.dim(0), w = map.dim(1);
    const double a = p[0], mx = p[1], my = p[2], sx = p[3], sy = p[4];
    double cost = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (x - mx) / sx;
            const double dy = (y - my) / sy;
            const double m = a * std::exp(-0.5 * dx * dx - 0.5 * dy * dy);
            const double r = m - map.at2(y, x);
            cost += r * r;
        }
    return 0.5 * cost;
}

} // namespace

GaussianFit fit_gaussian_2d(const Tensor& map, int max_iters) {
    if (map.rank() != 2) throw ShapeError("fit_gaussian_2d: map must be rank-2");
    const int h = map.dim(0), w = map.dim(1);
    double peak = 0.0;
    for (int64_t i = 0; i < map.numel(); ++i) peak = std::max(peak, map[i]);

    // amplitude, mu_x, mu_y, sigma_x, sigma_y
    std::array<double, 5> p{peak > 0 ? peak : 1.0, (w - 1) / 2.0, (h - 1) / 2.0, w / 4.0, h / 4.0};
    double cost = fit_cost(map, p);

    GaussianFit fit;
    for (int iter = 0; iter < max_iters; ++iter) {
        fit.iterations = iter + 1;
        std::array<std::array<double, 5>, 5> jtj{};
        std::array<double, 5> jtr{};
        const double a = p[0], mx = p[1], my = p[2], sx = p[3], sy = p[4];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double ux = (x - mx) / sx;
                const double uy = (y - my) / sy;
                const double e = std::exp(-0.5 * ux * ux - 0.5 * uy * uy);
                const double m = a * e;
                const double r = m - map.at2(y, x);
                const std::array<double, 5> j{e, m * ux / sx, m * uy / sy, m * ux * ux / sx,
                                              m * uy * uy / sy};
                for (int i = 0; i < 5; ++i) {
                    jtr[static_cast<size_t>(i)] += j[static_cast<size_t>(i)] * r;
                    for (int k = i; k < 5; ++k)
                        jtj[static_cast<size_t>(i)][static_cast<size_t>(k)] +=
                            j[static_cast<size_t>(i)] * j[static_cast<size_t>(k)];
                }
            }
        for (int i = 0; i < 5; ++i)
            for (int k = 0; k < i; ++k)
                jtj[static_cast<size_t>(i)][static_cast<size_t>(k)] =
                    jtj[static_cast<size_t>(k)][static_cast<size_t>(i)];

        std::array<double, 5> delta{};
        std::array<double, 5> rhs{};
        for (int i = 0; i < 5; ++i) rhs[static_cast<size_t>(i)] = -jtr[static_cast<size_t>(i)];
        if (!solve5(jtj, rhs, delta)) break;

        double step = 1.0;
        bool improved = false;
        for (int half = 0; half < 24; ++half) {
            std::array<double, 5> cand = p;
            for (int i = 0; i < 5; ++i)
                cand[static_cast<size_t>(i)] += step * delta[static_cast<size_t>(i)];
            cand[3] = std::max(cand[3], 1e-3); // keep sigmas positive
            cand[4] = std::max(cand[4], 1e-3);
            const double c = fit_cost(map, cand);
            if (c < cost) {
                p = cand;
                const double rel_drop = (cost - c) / std::max(cost, 1e-300);
                cost = c;
                improved = true;
                if (rel_drop < 1e-12) fit.converged = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) {
            fit.converged = true; // stationary point: no descent direction left
            break;
        }
        if (fit.converged) break;
    }

    fit.amplitude = p[0];
    fit.mu_x = p[1];
    fit.mu_y = p[2];
    fit.sigma_x = std::fabs(p[3]);
    fit.sigma_y = std::fabs(p[4]);
    fit.rms = std::sqrt(2.0 * cost / (static_cast<double>(h) * w));
    return fit;
}

CenterBias center_bias(const std::vector<const Sample*>& samples, int aam_size) {
    if (samples.empty()) throw DataError("center_bias: no masks given");
    Tensor aam({aam_size, aam_size});
    for (const Sample* s : samples) {
        require_gt(*s);
        Tensor mask({s->height, s->width});
        for (int64_t i = 0; i < mask.numel(); ++i)
            mask[i] = s->gt[static_cast<size_t>(i)] >= 128 ? 1.0 : 0.0;
        Tensor resized = resize_bilinear_2d(mask, aam_size, aam_size);
        for (int64_t i = 0; i < aam.numel(); ++i) aam[i] += resized[i];
    }
    double peak = 0.0;
    for (int64_t i = 0; i < aam.numel(); ++i) {
        aam[i] /= static_cast<double>(samples.size());
        peak = std::max(peak, aam[i]);
    }
    if (peak > 0.0)
        for (int64_t i = 0; i < aam.numel(); ++i) aam[i] /= peak;

    CenterBias cb;
    cb.fit = fit_gaussian_2d(aam);
    cb.cbi = 0.5 * (cb.fit.sigma_x + cb.fit.sigma_y);
    const double center = (aam_size - 1) / 2.0;
    cb.mu_off_x = cb.fit.mu_x - center;
    cb.mu_off_y = cb.fit.mu_y - center;
    cb.aam = std::move(aam);
    return cb;
}

namespace {

// Sobel gradient magnitude; border pixels get zero gradient.
std::vector<double> sobel_magnitude(const std::vector<double>& plane, int h, int w) {
    std::vector<double> mag(static_cast<size_t>(h) * w, 0.0);
    auto at = [&](int y, int x) { return plane[static_cast<size_t>(y) * w + x]; };
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const double gx = at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) -
                              at(y - 1, x - 1) - 2 * at(y, x - 1) - at(y + 1, x - 1);
            const double gy = at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) -
                              at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1);
            mag[static_cast<size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    return mag;
}

std::vector<char> threshold_edges(const std::vector<double>& mag, double fraction) {
    double peak = 0.0;
    for (double v : mag) peak = std::max(peak, v);
    std::vector<char> edges(mag.size(), 0);
    if (peak <= 0.0) return edges;
    const double t = fraction * peak;
    for (size_t i = 0; i < mag.size(); ++i) edges[i] = mag[i] > t ? 1 : 0;
    return edges;
}

} // namespace

DepthQuality depth_quality(const Sample& s, double edge_threshold, int match_radius) {
    const int h = s.height, w = s.width;
    std::vector<double> gray(static_cast<size_t>(h) * w);
    std::vector<double> depth(static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < plane_size(s); ++i) {
        const double r = s.rgb[static_cast<size_t>(i) * 3];
        const double g = s.rgb[static_cast<size_t>(i) * 3 + 1];
        const double b = s.rgb[static_cast<size_t>(i) * 3 + 2];
        gray[static_cast<size_t>(i)] = 0.299 * r + 0.587 * g + 0.114 * b;
        depth[static_cast<size_t>(i)] = s.depth[static_cast<size_t>(i)];
    }
    const std::vector<char> tex_edges = threshold_edges(sobel_magnitude(gray, h, w), edge_threshold);
    const std::vector<char> dep_edges =
        threshold_edges(sobel_magnitude(depth, h, w), edge_threshold);

    int64_t depth_edge_count = 0, bad = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!dep_edges[static_cast<size_t>(y) * w + x]) continue;
            ++depth_edge_count;
            bool matched = false;
            for (int dy = -match_radius; dy <= match_radius && !matched; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -match_radius; dx <= match_radius; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    if (tex_edges[static_cast<size_t>(yy) * w + xx]) {
                        matched = true;
                        break;
                    }
                }
            }
            if (!matched) ++bad;
        }
    if (depth_edge_count == 0) return {1.0, true};
    return {1.0 - static_cast<double>(bad) / static_cast<double>(depth_edge_count), false};
}

StatsReport dataset_stats(const std::vector<Sample>& samples, const StatsOptions& opt) {
    if (samples.empty()) throw DataError("dataset_stats: no samples");
    StatsReport rep;
    rep.n_images = static_cast<int>(samples.size());

    int contrast_n = 0;
    for (const Sample& s : samples) {
        const auto rgc = chi2_contrast_color(s, opt.normalized_hist);
        const auto dgc = chi2_contrast_depth(s, opt.normalized_hist);
        const auto ric = interior_contrast_color(s);
        const auto dic = interior_contrast_depth(s);
        if (rgc && dgc && ric && dic) {
            rep.rgc += *rgc;
            rep.dgc += *dgc;
            rep.ric += *ric;
            rep.dic += *dic;
            ++contrast_n;
        } else {
            ++rep.n_contrast_excluded;
        }
        rep.os += object_size(s);
        const DepthQuality dq = depth_quality(s, opt.edge_threshold, opt.match_radius);
        rep.dq += dq.dq;
        if (dq.degenerate) ++rep.n_dq_degenerate;
    }
    if (contrast_n > 0) {
        rep.rgc /= contrast_n;
        rep.dgc /= contrast_n;
        rep.ric /= contrast_n;
        rep.dic /= contrast_n;
    }
    rep.os /= rep.n_images;
    rep.dq /= rep.n_images;

    std::vector<const Sample*> ptrs;
    ptrs.reserve(samples.size());
    for (const Sample& s : samples) ptrs.push_back(&s);
    CenterBias cb = center_bias(ptrs);
    rep.cbi = cb.cbi;
    rep.mu_off_x = cb.mu_off_x;
    rep.mu_off_y = cb.mu_off_y;
    rep.sigma_x = cb.fit.sigma_x;
    rep.sigma_y = cb.fit.sigma_y;
    rep.fit_converged = cb.fit.converged;
    rep.aam = std::move(cb.aam);
    return rep;
}

} // namespace smac
