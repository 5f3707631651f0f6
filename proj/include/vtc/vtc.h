#ifndef VTC_VTC_H
#define VTC_VTC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VTC_API __declspec(dllexport)
#else
#define VTC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every call returns one; details via vtc_last_error(). */
typedef enum vtc_status {
  VTC_OK = 0,
  VTC_ERR_CONTRACT = 1,   /* bad argument, config or precondition */
  VTC_ERR_IO = 2,         /* file missing, unreadable or unwritable */
  VTC_ERR_ACCEPTANCE = 3, /* a requested check did not pass */
  VTC_ERR_INTERNAL = 4    /* simulation, training or identification failure */
} vtc_status;

/* Opaque handles. */
typedef struct vtc_classifier vtc_classifier;
typedef struct vtc_affordance_model vtc_affordance_model;
typedef struct vtc_dynamics vtc_dynamics;
typedef struct vtc_lqr vtc_lqr;

/* Message of the last failed call on this thread; empty after success. */
VTC_API const char* vtc_last_error(void);
VTC_API const char* vtc_version(void);
/* Releases strings returned through char** out-parameters. */
VTC_API void vtc_string_free(char* s);

/* Config arguments are JSON text (NULL or "" for defaults). Report out-parameters
   may be NULL; otherwise they receive a JSON string owned by the caller. */

/* Affordance dataset: n_seeds x 24 depth/affordance pairs plus manifest.json. */
VTC_API vtc_status vtc_generate_affordance_dataset(const char* config, int n_seeds, uint64_t seed,
                                                   const char* out_dir, char** report);

/* Tactile features (features.csv) and one sample sequence per category as PGM frames. */
VTC_API vtc_status vtc_generate_tactile_dataset(const char* config, uint64_t seed, const char* out_dir,
                                                char** report);

/* Trains on features_csv when given, else on freshly generated features. */
VTC_API vtc_status vtc_classifier_train(const char* config, const char* features_csv, uint64_t seed,
                                        vtc_classifier** out, char** report);
VTC_API vtc_status vtc_classifier_load(const char* path, vtc_classifier** out);
VTC_API vtc_status vtc_classifier_save(const vtc_classifier* clf, const char* path);
VTC_API void vtc_classifier_free(vtc_classifier* clf);

/* Pretrains a fresh model on the dataset behind manifest_path. */
VTC_API vtc_status vtc_affordance_pretrain(const char* config, const char* manifest_path, int epochs,
                                           uint64_t seed, vtc_affordance_model** out, char** report);
VTC_API vtc_status vtc_affordance_load(const char* path, vtc_affordance_model** out);
VTC_API vtc_status vtc_affordance_save(const vtc_affordance_model* model, const char* path);
VTC_API void vtc_affordance_free(vtc_affordance_model* model);
/* Online fine-tuning in the target environment with tactile labels; curve_csv optional. */
VTC_API vtc_status vtc_affordance_finetune(vtc_affordance_model* model, const char* config, int grasp_budget,
                                           int use_replay, uint64_t seed, const char* curve_csv,
                                           char** report);
/* precision@k on the held-out target set built from (config, seed). */
VTC_API vtc_status vtc_affordance_precision_at_k(const vtc_affordance_model* model, const char* config, int k,
                                                 uint64_t seed, double* precision);

/* SourceOnly / TargetScratch / SourceFinetuned / oracle comparison. */
VTC_API vtc_status vtc_transfer_experiment(const char* config, int grasp_budget, uint64_t seed,
                                           const char* out_dir, char** report);
/* Grasps to reach target_precision with and without the replay buffer. */
VTC_API vtc_status vtc_replay_experiment(const char* config, int grasp_budget, double target_precision,
                                         uint64_t seed, char** report);

VTC_API vtc_status vtc_fit_dynamics(const char* config, uint64_t seed, vtc_dynamics** out, char** report);
VTC_API vtc_status vtc_dynamics_load(const char* path, vtc_dynamics** out);
VTC_API vtc_status vtc_dynamics_save(const vtc_dynamics* dyn, const char* path);
VTC_API void vtc_dynamics_free(vtc_dynamics* dyn);

VTC_API vtc_status vtc_lqr_make(const vtc_dynamics* dyn, const char* config, vtc_lqr** out, char** report);
VTC_API vtc_status vtc_lqr_load(const char* path, vtc_lqr** out);
VTC_API vtc_status vtc_lqr_save(const vtc_lqr* lqr, const char* path);
VTC_API void vtc_lqr_free(vtc_lqr* lqr);
/* Copies the gain row vector over (y, theta, alpha). */
VTC_API vtc_status vtc_lqr_gain(const vtc_lqr* lqr, double k[3]);

/* mode: "horizontal" (controller "lqr" needs lqr, or "proportional", "zero") or
   "vertical" (edge "thin" or "thick", proportional with the plant gain).
   log_csv optional. */
VTC_API vtc_status vtc_slide(const char* config, const char* mode, const char* controller, const char* edge,
                             const vtc_lqr* lqr, double init_coverage, uint64_t seed, const char* log_csv,
                             char** report);

/* One state-machine episode. With model NULL the geometric labels drive edge search. */
VTC_API vtc_status vtc_run_episode(const char* config, const vtc_classifier* clf,
                                   const vtc_affordance_model* model, uint64_t seed, char** report);

#ifdef __cplusplus
}
#endif

#endif
