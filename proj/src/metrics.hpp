#ifndef SMAC_METRICS_HPP
#define SMAC_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace smac {

// All metric inputs are rank-2 [H x W]: pred real-valued in [0,1], gt binary 0/1.

double mae(const Tensor& pred, const Tensor& gt);

// Max F over 255 uniform thresholds, beta^2 = 0.3. An empty prediction at a
// threshold scores 0; an empty gt makes the metric undefined (nullopt).
std::optional<double> max_f_measure(const Tensor& pred, const Tensor& gt, double beta2 = 0.3,
                                    int thresholds = 255);

// Structure measure: alpha * object + (1-alpha) * region, with the standard
// degenerate fallbacks (gt empty -> 1 - mean(pred); gt full -> mean(pred)).
double s_measure(const Tensor& pred, const Tensor& gt, double alpha = 0.5);

// Enhanced-alignment measure, max over 255 thresholds. Degenerate gt falls
// back to 1 - mean|pred_t - gt|.
double e_measure(const Tensor& pred, const Tensor& gt, int thresholds = 255);

struct ImageMetrics {
    std::string name;
    double sm = 0.0;
    std::optional<double> max_f;
    double e = 0.0;
    double mae = 0.0;
};

struct MetricsReport {
    std::vector<ImageMetrics> per_image;
    int n_images = 0;
    int n_undefined_maxf = 0;
    double mean_sm = 0.0;
    double mean_maxf = 0.0; // over images where defined
    double mean_e = 0.0;
    double mean_mae = 0.0;
};

MetricsReport aggregate(std::vector<ImageMetrics> rows);

Tensor resize_bilinear_2d(const Tensor& src, int out_h, int out_w);

} // namespace smac

#endif
