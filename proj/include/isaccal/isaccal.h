#ifndef ISACCAL_H
#define ISACCAL_H

/* C interface to the isaccal library. All objects are opaque handles owned by
 * the caller and released with the matching *_free function. Every fallible
 * call returns an isaccal_status; on failure isaccal_last_error() describes the
 * problem (thread-local, valid until the next failing call on that thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ISACCAL_API __declspec(dllexport)
#else
#define ISACCAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum isaccal_status {
  ISACCAL_OK = 0,
  ISACCAL_ERR_IO = 1,
  ISACCAL_ERR_CONFIG = 2,
  ISACCAL_ERR_NUMERICAL = 3,
  ISACCAL_ERR_INVALID_ARGUMENT = 4,
  ISACCAL_ERR_SCENE_GENERATION = 5,
  ISACCAL_ERR_CALIBRATION = 6,
  ISACCAL_ERR_INTERNAL = 99
} isaccal_status;

typedef struct isaccal_config isaccal_config;
typedef struct isaccal_model isaccal_model;
typedef struct isaccal_sensing_eval isaccal_sensing_eval;

ISACCAL_API const char* isaccal_version(void);
ISACCAL_API const char* isaccal_last_error(void);

/* ---- configuration ---- */

ISACCAL_API isaccal_status isaccal_config_from_preset(const char* name, isaccal_config** out);
ISACCAL_API isaccal_status isaccal_config_from_file(const char* path, isaccal_config** out);
ISACCAL_API isaccal_status isaccal_config_copy(const isaccal_config* cfg, isaccal_config** out);
/* "section.key=value"; the value is parsed as JSON, otherwise taken as a string. */
ISACCAL_API isaccal_status isaccal_config_override(isaccal_config* cfg, const char* assignment);
/* Numeric or boolean entry of the configuration tree, e.g. "scenario.t_max". */
ISACCAL_API isaccal_status isaccal_config_get_number(const isaccal_config* cfg, const char* key, double* value);
/* Canonical JSON text. Writes at most cap bytes (NUL included); *needed gets the full size. */
ISACCAL_API isaccal_status isaccal_config_json(const isaccal_config* cfg, char* buf, size_t cap, size_t* needed);
/* 16 hex digits plus NUL. */
ISACCAL_API isaccal_status isaccal_config_hash(const isaccal_config* cfg, char out[17]);
ISACCAL_API void isaccal_config_free(isaccal_config* cfg);

/* ---- models: calibrated or model-based array parameters for one impairment draw ---- */

typedef struct isaccal_log_row {
  int iter;
  double loss;
  double sens_loss;
  double comm_loss;
  double lr_mult_gain;
  double lr_mult_pos;
  double grad_norm_tx;
  double grad_norm_rx;
} isaccal_log_row;

/* Called after every training iteration. feasible is 1 when the projected
 * parameters satisfy the array constraints. */
typedef void (*isaccal_log_fn)(const isaccal_log_row* row, int feasible, void* user);

/* method: "matched" (true impairments) or "mismatched" (ideal arrays). */
ISACCAL_API isaccal_status isaccal_model_baseline(const isaccal_config* cfg, const char* method,
                                                  uint64_t impairment_seed, isaccal_model** out);
/* method: "ul", "slcb" or "slcb-perturbed". data_seed must differ from impairment_seed. */
ISACCAL_API isaccal_status isaccal_model_train(const isaccal_config* cfg, const char* method,
                                               uint64_t impairment_seed, uint64_t data_seed, isaccal_log_fn log,
                                               void* user, isaccal_model** out);
/* Continues training a loaded checkpoint up to total_iterations (<= 0: its configured count). */
ISACCAL_API isaccal_status isaccal_model_resume(isaccal_model* model, int total_iterations, isaccal_log_fn log,
                                                void* user);
ISACCAL_API isaccal_status isaccal_model_save(const isaccal_model* model, const char* path);
ISACCAL_API isaccal_status isaccal_model_load(const char* path, isaccal_model** out);
/* Copy of the configuration the model was built with. */
ISACCAL_API isaccal_status isaccal_model_config(const isaccal_model* model, isaccal_config** out);

typedef struct isaccal_model_info {
  int num_antennas;
  int iterations_done;
  uint64_t impairment_seed;
  uint64_t data_seed;
  char method[32];
} isaccal_model_info;

ISACCAL_API isaccal_status isaccal_model_info_get(const isaccal_model* model, isaccal_model_info* out);
/* Learned parameters packed as [Re b, Im b, w] for TX then RX (6K values). */
ISACCAL_API isaccal_status isaccal_model_params(const isaccal_model* model, double* out, size_t cap);
ISACCAL_API void isaccal_model_free(isaccal_model* model);

/* ---- evaluation ---- */

typedef struct isaccal_eval_options {
  int samples;
  uint64_t seed;
  double omega_r;  /* NaN: drawn per sample */
  double snr_s_db; /* NaN: the configured sensing SNR */
  int max_iter;    /* <= 0: t_max plus the configured slack */
  int threads;
} isaccal_eval_options;

/* Defaults from the configuration's eval section. */
ISACCAL_API isaccal_status isaccal_eval_options_init(const isaccal_config* cfg, isaccal_eval_options* out);

typedef struct isaccal_operating_point {
  double delta;
  double p_fa;
  double p_md;
  double gospa;
  long detections;
} isaccal_operating_point;

/* The model's arrays are evaluated against its true impairments in the environment given by cfg. */
ISACCAL_API isaccal_status isaccal_sensing_evaluate(const isaccal_model* model, const isaccal_config* cfg,
                                                    const isaccal_eval_options* opt, isaccal_sensing_eval** out);
ISACCAL_API isaccal_status isaccal_sensing_at_delta(const isaccal_sensing_eval* eval, double delta,
                                                    isaccal_operating_point* out);
ISACCAL_API isaccal_status isaccal_sensing_at_pfa(const isaccal_sensing_eval* eval, double target_pfa,
                                                  isaccal_operating_point* out);
ISACCAL_API void isaccal_sensing_eval_free(isaccal_sensing_eval* eval);

/* Threshold calibrated on target-free scenes for the given false-alarm rate. */
ISACCAL_API isaccal_status isaccal_noise_threshold(const isaccal_model* model, const isaccal_config* cfg,
                                                   const isaccal_eval_options* opt, double target_pfa,
                                                   double* delta);

typedef struct isaccal_ser {
  double ser;
  long symbols;
  long errors;
} isaccal_ser;

ISACCAL_API isaccal_status isaccal_ser_evaluate(const isaccal_model* model, const isaccal_config* cfg,
                                                const isaccal_eval_options* opt, isaccal_ser* out);

/* Precoder response in dB over the precoder angle grid for sectors given in degrees.
 * Call with angles_deg == NULL to query *count. */
ISACCAL_API isaccal_status isaccal_precoder_response(const isaccal_model* model, const isaccal_config* cfg,
                                                     double sensing_min_deg, double sensing_max_deg,
                                                     double comm_min_deg, double comm_max_deg, double omega_r,
                                                     double* angles_deg, double* response_db, size_t cap,
                                                     size_t* count);

typedef struct isaccal_adm_info {
  int num_angles;
  int num_delays;
  int num_targets;
  int num_detections;
} isaccal_adm_info;

/* Angle-delay map of a fixed multi-target scene seen through the model's RX
 * parameters. map is column major (angle fastest), num_angles * num_delays
 * values; detections holds (angle_deg, range_m) pairs, targets likewise.
 * Any output pointer may be NULL; info is always filled. noiseless != 0 drops
 * the receiver noise. */
ISACCAL_API isaccal_status isaccal_adm_dump(const isaccal_model* model, const isaccal_config* cfg, uint64_t seed,
                                            int noiseless, isaccal_adm_info* info, double* angles_deg,
                                            double* ranges_m, double* map, double* targets, double* detections,
                                            double* residual_norms);

/* Finite-difference gradient checks and metric oracles on small instances.
 * The report lists one line per check; *failures counts failed checks. */
ISACCAL_API isaccal_status isaccal_selftest(uint64_t seed, char* report, size_t cap, size_t* needed, int* failures);

#ifdef __cplusplus
}
#endif

#endif
