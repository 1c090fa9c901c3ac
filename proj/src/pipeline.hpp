#ifndef SMAC_PIPELINE_HPP
#define SMAC_PIPELINE_HPP

#include <functional>
#include <string>

#include "config.hpp"
#include "metrics.hpp"
#include "stats.hpp"

namespace smac {

struct TrainRunResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int iterations = 0;
};

// Builds a model from cfg, trains on data_dir, writes <out_stem>.bin/.manifest
// and the loss curve (when paths are non-empty).
TrainRunResult run_train(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& out_stem, const std::string& loss_curve_path,
                         const std::function<void(int, double)>& progress = {});

// Loads a checkpoint and writes one saliency PGM per dataset stem into out_dir.
void run_infer(const RunConfig& cfg, const std::string& ckpt_stem, const std::string& data_dir,
               const std::string& out_dir);

// Compares a prediction directory against a ground-truth directory (matched
// by stem) and writes the summary table and per-image detail file.
MetricsReport run_eval(const std::string& pred_dir, const std::string& gt_dir,
                       const std::string& report_path, const std::string& detail_path);

// Dataset profile; writes the report table and the average annotation map.
StatsReport run_stats(const std::string& data_dir, const StatsOptions& opt,
                      const std::string& report_path, const std::string& aam_path);

struct GradcheckRow {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradcheckSummary {
    bool all_pass = false;
    std::vector<GradcheckRow> rows;
    std::string table; // printable pass/fail table
};

// The full op + attention-block gradient suite at the given tolerance.
GradcheckSummary run_gradcheck_suite(double tol = 1e-4, double fd_step = 1e-6, int seeds = 5);

// Renders the SMAC attention/contrast maps of one query position for an
// image pair: a_r.pgm, a_d.pgm, c_r.pgm, c_d.pgm under out_dir, query pixel
// painted white. Returns the selective attention weight.
double run_dump_attention(const RunConfig& cfg, const std::string& ckpt_stem,
                          const std::string& rgb_path, const std::string& depth_path,
                          int query_y, int query_x, const std::string& out_dir);

} // namespace smac

#endif
