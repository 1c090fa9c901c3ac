// smac command-line tool. Links the C API only (smac/smac.h).
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smac/smac.h"

namespace {

struct ConfigHandle {
    smac_config* ptr = nullptr;
    ~ConfigHandle() { smac_config_free(ptr); }
};

int fail(int code) {
    std::fprintf(stderr, "error[%d]: %s\n", code, smac_last_error());
    return code;
}

// Loads --config when given, otherwise toy defaults; applies overrides after.
int make_config(ConfigHandle& h, const std::string& config_path,
                const std::vector<std::pair<std::string, std::string>>& overrides) {
    if (config_path.empty()) {
        h.ptr = smac_config_create();
    } else {
        const int rc = smac_config_load(config_path.c_str(), &h.ptr);
        if (rc != SMAC_OK) return rc;
    }
    for (const auto& [key, value] : overrides) {
        const int rc = smac_config_set(h.ptr, key.c_str(), value.c_str());
        if (rc != SMAC_OK) return rc;
    }
    return SMAC_OK;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective mutual attention and contrast saliency toolkit"};
    app.require_subcommand(1);

    // gradcheck
    auto* cmd_grad = app.add_subcommand("gradcheck", "Run the gradient suite for all ops and blocks");
    double gc_tol = 1e-4, gc_h = 1e-6;
    int gc_seeds = 5;
    cmd_grad->add_option("--tol", gc_tol, "Max relative error tolerance");
    cmd_grad->add_option("--fd-step", gc_h, "Finite-difference step");
    cmd_grad->add_option("--seeds", gc_seeds, "Random seeds per case");

    // train
    auto* cmd_train = app.add_subcommand("train", "Train on a dataset directory");
    std::string tr_config, tr_data, tr_out = "checkpoint", tr_curve = "loss_curve.csv";
    int tr_iters = -1;
    long tr_seed = -1;
    cmd_train->add_option("--config", tr_config, "Run configuration file");
    cmd_train->add_option("--data", tr_data, "Dataset root (rgb/, depth/, gt/)");
    cmd_train->add_option("--out", tr_out, "Checkpoint stem to write");
    cmd_train->add_option("--loss-curve", tr_curve, "Loss curve output path");
    cmd_train->add_option("--iters", tr_iters, "Override total iterations");
    cmd_train->add_option("--seed", tr_seed, "Override random seed");

    // infer
    auto* cmd_infer = app.add_subcommand("infer", "Write saliency maps for a dataset");
    std::string in_config, in_ckpt, in_data, in_out = "predictions";
    cmd_infer->add_option("--config", in_config, "Run configuration file");
    cmd_infer->add_option("--ckpt", in_ckpt, "Checkpoint stem to load");
    cmd_infer->add_option("--data", in_data, "Dataset root (gt/ optional)")->required();
    cmd_infer->add_option("--out", in_out, "Output directory for PGM maps");

    // eval
    auto* cmd_eval = app.add_subcommand("eval", "Score predictions against ground truth");
    std::string ev_pred, ev_gt, ev_report = "metrics.txt", ev_detail = "metrics_detail.txt";
    cmd_eval->add_option("--pred", ev_pred, "Prediction directory")->required();
    cmd_eval->add_option("--gt", ev_gt, "Ground-truth directory")->required();
    cmd_eval->add_option("--report", ev_report, "Summary report path");
    cmd_eval->add_option("--detail", ev_detail, "Per-image detail path");

    // stats
    auto* cmd_stats = app.add_subcommand("stats", "Profile a dataset (contrast, center bias, ...)");
    std::string st_data, st_report = "stats.txt", st_aam = "aam.pgm";
    bool st_raw = false;
    cmd_stats->add_option("--data", st_data, "Dataset root")->required();
    cmd_stats->add_option("--report", st_report, "Report path");
    cmd_stats->add_option("--aam", st_aam, "Average annotation map output (PGM)");
    cmd_stats->add_flag("--raw-hist", st_raw, "Chi-square on raw counts instead of normalized");

    // dump-attn
    auto* cmd_dump = app.add_subcommand("dump-attn", "Render attention maps for a query position");
    std::string da_config, da_ckpt, da_rgb, da_depth, da_out = "attention";
    int da_qy = 0, da_qx = 0;
    cmd_dump->add_option("--config", da_config, "Run configuration file");
    cmd_dump->add_option("--ckpt", da_ckpt, "Checkpoint stem to load (fresh init when omitted)");
    cmd_dump->add_option("--rgb", da_rgb, "RGB image (PPM/PNG)")->required();
    cmd_dump->add_option("--depth", da_depth, "Depth image (PGM/PNG)")->required();
    cmd_dump->add_option("--query-y", da_qy, "Query row in input pixels");
    cmd_dump->add_option("--query-x", da_qx, "Query column in input pixels");
    cmd_dump->add_option("--out", da_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::fprintf(stderr, "error[%d]: %s\n", SMAC_ERR_CONFIG, e.what());
        return SMAC_ERR_CONFIG;
    }

    if (cmd_grad->parsed()) {
        char* table = nullptr;
        const int rc = smac_gradcheck(gc_tol, gc_h, gc_seeds, &table);
        if (table) {
            std::fputs(table, stdout);
            smac_string_free(table);
        }
        if (rc != SMAC_OK) return fail(rc);
        std::printf("gradient suite: all cases passed (tol %g)\n", gc_tol);
        return 0;
    }

    if (cmd_train->parsed()) {
        std::vector<std::pair<std::string, std::string>> overrides;
        if (tr_iters >= 0) overrides.emplace_back("total_iters", std::to_string(tr_iters));
        if (tr_seed >= 0) overrides.emplace_back("seed", std::to_string(tr_seed));
        ConfigHandle cfg;
        int rc = make_config(cfg, tr_config, overrides);
        if (rc != SMAC_OK) return fail(rc);
        double initial = 0, final_loss = 0;
        rc = smac_train(cfg.ptr, tr_data.c_str(), tr_out.c_str(), tr_curve.c_str(), &initial,
                        &final_loss);
        if (rc != SMAC_OK) return fail(rc);
        std::printf("train: %s -> %s (initial loss %.6f, final loss %.6f)\n", tr_data.c_str(),
                    tr_out.c_str(), initial, final_loss);
        return 0;
    }

    if (cmd_infer->parsed()) {
        ConfigHandle cfg;
        int rc = make_config(cfg, in_config, {});
        if (rc != SMAC_OK) return fail(rc);
        rc = smac_infer(cfg.ptr, in_ckpt.empty() ? nullptr : in_ckpt.c_str(), in_data.c_str(),
                        in_out.c_str());
        if (rc != SMAC_OK) return fail(rc);
        std::printf("infer: wrote saliency maps to %s\n", in_out.c_str());
        return 0;
    }

    if (cmd_eval->parsed()) {
        double means[4] = {0, 0, 0, 0};
        const int rc = smac_eval(ev_pred.c_str(), ev_gt.c_str(), ev_report.c_str(),
                                 ev_detail.c_str(), means);
        if (rc != SMAC_OK) return fail(rc);
        std::printf("eval: Sm=%.4f maxF=%.4f E=%.4f MAE=%.4f (report: %s)\n", means[0], means[1],
                    means[2], means[3], ev_report.c_str());
        return 0;
    }

    if (cmd_stats->parsed()) {
        const int rc = smac_stats(st_data.c_str(), st_raw ? 1 : 0, st_report.c_str(),
                                  st_aam.c_str());
        if (rc != SMAC_OK) return fail(rc);
        std::printf("stats: wrote %s and %s\n", st_report.c_str(), st_aam.c_str());
        return 0;
    }

    if (cmd_dump->parsed()) {
        ConfigHandle cfg;
        int rc = make_config(cfg, da_config, {});
        if (rc != SMAC_OK) return fail(rc);
        double alpha = 0;
        rc = smac_dump_attention(cfg.ptr, da_ckpt.empty() ? nullptr : da_ckpt.c_str(),
                                 da_rgb.c_str(), da_depth.c_str(), da_qy, da_qx, da_out.c_str(),
                                 &alpha);
        if (rc != SMAC_OK) return fail(rc);
        std::printf("dump-attn: wrote a_r/a_d/c_r/c_d to %s (alpha %.4f)\n", da_out.c_str(), alpha);
        return 0;
    }

    return SMAC_ERR_CONFIG;
}
