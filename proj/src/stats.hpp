#ifndef SMAC_STATS_HPP
#define SMAC_STATS_HPP

#include <optional>
#include <vector>

#include "dataset.hpp"
#include "tensor.hpp"

namespace smac {

// 0.5 * sum((a-b)^2 / (a+b)) over bins with mass; inputs need not be
// normalized (callers decide).
double chi2_distance(const std::vector<double>& a, const std::vector<double>& b);

// -sum(p ln p) in nats over the normalized histogram.
double entropy_nats(const std::vector<double>& hist);

// Joint 8x8x8 color histogram / 256-bin depth histogram builders. mask_value
// selects which pixels enter (true = foreground).
std::vector<double> color_histogram(const Sample& s, bool foreground);
std::vector<double> depth_histogram(const Sample& s, bool foreground);

// chi^2 between foreground and background histograms; nullopt when either
// region is empty. Histograms are unit-normalized unless normalized=false.
std::optional<double> chi2_contrast_color(const Sample& s, bool normalized = true);
std::optional<double> chi2_contrast_depth(const Sample& s, bool normalized = true);

// Entropy of the normalized foreground histogram; nullopt on empty foreground.
std::optional<double> interior_contrast_color(const Sample& s);
std::optional<double> interior_contrast_depth(const Sample& s);

double object_size(const Sample& s); // foreground fraction of the gt mask

struct GaussianFit {
    double amplitude = 0.0;
    double mu_x = 0.0, mu_y = 0.0;
    double sigma_x = 0.0, sigma_y = 0.0;
    bool converged = false;
    int iterations = 0;
    double rms = 0.0;
};

// Nonlinear least squares (Gauss-Newton with backtracking) fit of
// A*exp(-(x-mu_x)^2/2sx^2 - (y-mu_y)^2/2sy^2) to a rank-2 map.
GaussianFit fit_gaussian_2d(const Tensor& map, int max_iters = 200);

struct CenterBias {
    Tensor aam; // 256x256, peak-normalized
    GaussianFit fit;
    double cbi = 0.0;      // (sigma_x + sigma_y) / 2
    double mu_off_x = 0.0; // offsets to the map center
    double mu_off_y = 0.0;
};
CenterBias center_bias(const std::vector<const Sample*>& samples, int aam_size = 256);

struct DepthQuality {
    double dq = 1.0;
    bool degenerate = false; // no depth edges found
};
// Simplified bad-point-rate: fraction of depth-edge pixels without a texture
// edge within Chebyshev radius match_radius; DQ = 1 - BPR.
DepthQuality depth_quality(const Sample& s, double edge_threshold = 0.1, int match_radius = 2);

struct StatsOptions {
    bool normalized_hist = true;
    double edge_threshold = 0.1;
    int match_radius = 2;
};

struct StatsReport {
    int n_images = 0;
    double rgc = 0.0, dgc = 0.0; // chi^2 global contrast means
    double ric = 0.0, dic = 0.0; // interior entropies (nats)
    int n_contrast_excluded = 0; // images lacking fg or bg pixels
    double cbi = 0.0;
    double mu_off_x = 0.0, mu_off_y = 0.0;
    double sigma_x = 0.0, sigma_y = 0.0;
    bool fit_converged = false;
    double os = 0.0;
    double dq = 0.0;
    int n_dq_degenerate = 0;
    Tensor aam;
};

StatsReport dataset_stats(const std::vector<Sample>& samples, const StatsOptions& opt = {});

} // namespace smac

#endif
