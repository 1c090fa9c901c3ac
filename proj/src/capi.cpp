#include "smac/smac.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "pipeline.hpp"

using namespace smac;

extern "C" {

struct smac_config {
    RunConfig rep;
};

struct smac_model {
    RunConfig cfg;
    TwoStreamState state;
    explicit smac_model(const RunConfig& c) : cfg(c), state(c.net, c.train.seed) {}
};

} // extern "C"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return SMAC_OK;
    } catch (const ConfigError& e) {
        set_error(e.what());
        return SMAC_ERR_CONFIG;
    } catch (const NumericError& e) {
        set_error(e.what());
        return SMAC_ERR_NUMERIC;
    } catch (const DataError& e) {
        set_error(e.what());
        return SMAC_ERR_DATA;
    } catch (const std::exception& e) {
        set_error(e.what());
        return SMAC_ERR_DATA;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

const char* smac_version(void) { return "1.0.0"; }

const char* smac_last_error(void) { return g_last_error.c_str(); }

void smac_string_free(char* s) { std::free(s); }

smac_config* smac_config_create(void) { return new smac_config{RunConfig::defaults()}; }

int smac_config_load(const char* path, smac_config** out) {
    if (!path || !out) {
        set_error("smac_config_load: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] { *out = new smac_config{RunConfig::load(path)}; });
}

int smac_config_set(smac_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) {
        set_error("smac_config_set: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] { cfg->rep.set(key, value); });
}

void smac_config_free(smac_config* cfg) { delete cfg; }

int smac_model_create(const smac_config* cfg, smac_model** out) {
    if (!cfg || !out) {
        set_error("smac_model_create: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] {
        cfg->rep.net.validate();
        *out = new smac_model(cfg->rep);
    });
}

int smac_model_load_checkpoint(smac_model* model, const char* ckpt_stem) {
    if (!model || !ckpt_stem) {
        set_error("smac_model_load_checkpoint: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] { load_checkpoint(ckpt_stem, model->state.registry); });
}

int smac_model_save_checkpoint(const smac_model* model, const char* ckpt_stem) {
    if (!model || !ckpt_stem) {
        set_error("smac_model_save_checkpoint: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] { save_checkpoint(ckpt_stem, model->state.registry); });
}

int smac_model_infer(smac_model* model, const uint8_t* rgb, const uint8_t* depth, int height,
                     int width, double* out_map) {
    if (!model || !rgb || !depth || !out_map || height < 1 || width < 1) {
        set_error("smac_model_infer: bad argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] {
        Sample s;
        s.width = width;
        s.height = height;
        s.rgb.assign(rgb, rgb + static_cast<size_t>(height) * width * 3);
        s.depth.assign(depth, depth + static_cast<size_t>(height) * width);
        Sample sized = resize_sample(s, model->cfg.net.input_size);
        PreprocessedSample pre = preprocess(sized, model->cfg.train.depth_invert);
        Tape tape;
        ForwardOptions opts;
        ForwardResult fwd = two_stream_forward(tape, model->state, pre.rgb, pre.depth, opts);
        const Tensor& map = tape.val(fwd.final_map);
        Tensor flat({map.dim(1), map.dim(2)});
        for (int64_t i = 0; i < flat.numel(); ++i) flat[i] = map[i];
        Tensor full = resize_bilinear_2d(flat, height, width);
        std::memcpy(out_map, full.data(), static_cast<size_t>(full.numel()) * sizeof(double));
    });
}

void smac_model_free(smac_model* model) { delete model; }

int smac_train(const smac_config* cfg, const char* data_dir, const char* out_ckpt_stem,
               const char* loss_curve_path, double* out_initial_loss, double* out_final_loss) {
    if (!cfg) {
        set_error("smac_train: null config");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] {
        TrainRunResult r = run_train(cfg->rep, data_dir ? data_dir : "",
                                     out_ckpt_stem ? out_ckpt_stem : "",
                                     loss_curve_path ? loss_curve_path : "");
        if (out_initial_loss) *out_initial_loss = r.initial_loss;
        if (out_final_loss) *out_final_loss = r.final_loss;
    });
}

int smac_infer(const smac_config* cfg, const char* ckpt_stem, const char* data_dir,
               const char* out_dir) {
    if (!cfg || !data_dir || !out_dir) {
        set_error("smac_infer: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] { run_infer(cfg->rep, ckpt_stem ? ckpt_stem : "", data_dir, out_dir); });
}

int smac_eval(const char* pred_dir, const char* gt_dir, const char* report_path,
              const char* detail_path, double out_means[4]) {
    if (!pred_dir || !gt_dir) {
        set_error("smac_eval: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] {
        MetricsReport rep = run_eval(pred_dir, gt_dir, report_path ? report_path : "",
                                     detail_path ? detail_path : "");
        if (out_means) {
            out_means[0] = rep.mean_sm;
            out_means[1] = rep.mean_maxf;
            out_means[2] = rep.mean_e;
            out_means[3] = rep.mean_mae;
        }
    });
}

int smac_stats(const char* data_dir, int raw_histograms, const char* report_path,
               const char* aam_pgm_path) {
    if (!data_dir) {
        set_error("smac_stats: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] {
        StatsOptions opt;
        opt.normalized_hist = raw_histograms == 0;
        run_stats(data_dir, opt, report_path ? report_path : "", aam_pgm_path ? aam_pgm_path : "");
    });
}

int smac_gradcheck(double tol, double fd_step, int seeds, char** out_table) {
    int status = SMAC_OK;
    const int rc = guarded([&] {
        GradcheckSummary s = run_gradcheck_suite(tol, fd_step, seeds);
        if (out_table) *out_table = dup_string(s.table);
        if (!s.all_pass) {
            set_error("gradient suite failed");
            status = SMAC_ERR_NUMERIC;
        }
    });
    return rc != SMAC_OK ? rc : status;
}

int smac_dump_attention(const smac_config* cfg, const char* ckpt_stem, const char* rgb_path,
                        const char* depth_path, int query_y, int query_x, const char* out_dir,
                        double* out_alpha) {
    if (!cfg || !rgb_path || !depth_path || !out_dir) {
        set_error("smac_dump_attention: null argument");
        return SMAC_ERR_CONFIG;
    }
    return guarded([&] {
        const double alpha = run_dump_attention(cfg->rep, ckpt_stem ? ckpt_stem : "", rgb_path,
                                                depth_path, query_y, query_x, out_dir);
        if (out_alpha) *out_alpha = alpha;
    });
}

} // extern "C"
