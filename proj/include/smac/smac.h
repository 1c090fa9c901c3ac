/* C API of the SMAC saliency library.
 *
 * Every function returns a status code (smac_status); 0 is success. On
 * failure, smac_last_error() returns a one-line description (thread-local,
 * valid until the next failing call on the same thread). Handles are opaque
 * and must be released with their matching _free function.
 */
#ifndef SMAC_SMAC_H
#define SMAC_SMAC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum smac_status {
    SMAC_OK = 0,
    SMAC_ERR_CONFIG = 2, /* bad configuration or CLI usage */
    SMAC_ERR_DATA = 3,   /* malformed/missing input data or I/O failure */
    SMAC_ERR_NUMERIC = 4 /* NaN gradients, non-finite loss, failed checks */
} smac_status;

typedef struct smac_config smac_config;
typedef struct smac_model smac_model;

const char* smac_version(void);
const char* smac_last_error(void);
void smac_string_free(char* s);

/* ---- configuration ----------------------------------------------------- */

smac_config* smac_config_create(void); /* toy defaults */
int smac_config_load(const char* path, smac_config** out);
int smac_config_set(smac_config* cfg, const char* key, const char* value);
void smac_config_free(smac_config* cfg);

/* ---- model ------------------------------------------------------------- */

/* Fresh model with weights drawn from the config seed. */
int smac_model_create(const smac_config* cfg, smac_model** out);
int smac_model_load_checkpoint(smac_model* model, const char* ckpt_stem);
int smac_model_save_checkpoint(const smac_model* model, const char* ckpt_stem);
/* Saliency for one RGB-D pair. rgb is h*w*3 interleaved, depth h*w; the
 * output map (caller-allocated, h*w doubles) is resized back to h x w. */
int smac_model_infer(smac_model* model, const uint8_t* rgb, const uint8_t* depth,
                     int height, int width, double* out_map);
void smac_model_free(smac_model* model);

/* ---- pipelines (the CLI surface) --------------------------------------- */

int smac_train(const smac_config* cfg, const char* data_dir, const char* out_ckpt_stem,
               const char* loss_curve_path, double* out_initial_loss, double* out_final_loss);

int smac_infer(const smac_config* cfg, const char* ckpt_stem, const char* data_dir,
               const char* out_dir);

/* out_means, when non-null, receives {Sm, maxF, E, MAE}. */
int smac_eval(const char* pred_dir, const char* gt_dir, const char* report_path,
              const char* detail_path, double out_means[4]);

int smac_stats(const char* data_dir, int raw_histograms, const char* report_path,
               const char* aam_pgm_path);

/* Runs the full gradient suite; *out_table (optional) receives a malloc'd
 * pass/fail table to release with smac_string_free. Returns SMAC_OK only if
 * every case passes. */
int smac_gradcheck(double tol, double fd_step, int seeds, char** out_table);

/* Renders attention/contrast maps for one query pixel; ckpt_stem may be NULL
 * for a freshly initialized model. out_alpha (optional) receives the
 * selective attention weight. */
int smac_dump_attention(const smac_config* cfg, const char* ckpt_stem, const char* rgb_path,
                        const char* depth_path, int query_y, int query_x, const char* out_dir,
                        double* out_alpha);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SMAC_SMAC_H */
