/* C API for the sfconv shared library.
 *
 * Every function that can fail returns an sfc_status; SFC_OK is 0. On
 * failure, sfc_last_error() returns a thread-local message describing the
 * most recent error on the calling thread. Objects are opaque handles that
 * must be released with their matching _free function. Handles are not
 * thread-safe; use one handle per thread or synchronize externally.
 */
#ifndef SFCONV_H
#define SFCONV_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sfc_status {
    SFC_OK = 0,
    SFC_ERR_INVALID = 1,  /* null pointer or malformed argument */
    SFC_ERR_SHAPE = 2,    /* operand shapes do not line up */
    SFC_ERR_DOMAIN = 3,   /* value outside the operation's domain */
    SFC_ERR_IO = 4,       /* file missing, malformed, or unwritable */
    SFC_ERR_CONFIG = 5,   /* bad config text */
    SFC_ERR_INTERNAL = 6  /* unexpected failure; message has details */
} sfc_status;

/* Message for the last failing call on this thread; never NULL. */
const char* sfc_last_error(void);

const char* sfc_version(void);

/* ---- tensors ------------------------------------------------------- */

typedef struct sfc_tensor sfc_tensor;

/* Dense row-major array of doubles, zero-initialized. rank >= 1, every
 * extent >= 1. */
sfc_status sfc_tensor_create(const uint64_t* extents, uint32_t rank, sfc_tensor** out);
void sfc_tensor_free(sfc_tensor* t);
uint32_t sfc_tensor_rank(const sfc_tensor* t);
/* Copies min(rank, cap) extents into out; returns the full rank. */
uint32_t sfc_tensor_extents(const sfc_tensor* t, uint64_t* out, uint32_t cap);
/* Borrowed pointer into the tensor, valid until the tensor is freed or
 * written through another API call. count receives the element count. */
sfc_status sfc_tensor_data(sfc_tensor* t, double** out, uint64_t* count);
/* Reads a TNSR file, or a binary PGM/PPM image as channels x h x w with raw
 * 0..255 sample values. */
sfc_status sfc_tensor_read(const char* path, sfc_tensor** out);
sfc_status sfc_tensor_write(const sfc_tensor* t, const char* path);

/* ---- sample statistics --------------------------------------------- */

/* Population moments of the tensor's elements: mean, variance, skewness
 * (m3/m2^1.5), excess kurtosis (m4/m2^2 - 3). Any out pointer may be NULL.
 * Fails with SFC_ERR_DOMAIN on zero variance or fewer than 3 elements. */
sfc_status sfc_moment_stats(const sfc_tensor* t, double* mean, double* variance,
                            double* skewness, double* kurtosis);

/* Equal-width histogram over [min, max], last bin right-inclusive.
 * edges must hold bins+1 doubles, counts bins values. */
sfc_status sfc_histogram(const sfc_tensor* t, uint32_t bins, double* edges,
                         uint64_t* counts);

/* ---- models -------------------------------------------------------- */

typedef struct sfc_model sfc_model;

sfc_status sfc_model_from_config(const char* config_path, sfc_model** out);
sfc_status sfc_model_from_config_text(const char* config_text, sfc_model** out);
sfc_status sfc_model_from_checkpoint(const char* checkpoint_path, sfc_model** out);
void sfc_model_free(sfc_model* m);

/* input must be batch x channels x h x w; a fresh output tensor is returned. */
sfc_status sfc_model_forward(sfc_model* m, const sfc_tensor* input, sfc_tensor** out);

sfc_status sfc_model_param_count(const sfc_model* m, uint64_t* out);

/* Analytic forward-pass operation count at the given b x c x h x w shape. */
sfc_status sfc_model_flops(const sfc_model* m, const uint64_t* shape, uint32_t rank,
                           uint64_t* out);

/* Median forward passes/sec * batch over `trials` timed runs (>= 3) after
 * `warmup` untimed runs. */
sfc_status sfc_model_measure_fps(const sfc_model* m, const uint64_t* shape, uint32_t rank,
                                 uint32_t trials, uint32_t warmup, double* out);

/* Per-layer singular value spectra as CSV (layer,matrix,index,sigma,
 * normalized). NULL path writes to stdout. */
sfc_status sfc_model_spectrum_csv(const sfc_model* m, const char* path);

/* Histogram of all learnable scalars as CSV (bin_low,bin_high,count) with a
 * trailing summary comment row. NULL path writes to stdout. */
sfc_status sfc_model_weight_histogram_csv(const sfc_model* m, uint32_t bins,
                                          int include_bias, const char* path);

/* ---- training / evaluation / data ---------------------------------- */

/* Called after each epoch. eval_metric is accuracy or Dice per the task. */
typedef void (*sfc_train_callback)(uint64_t epoch, uint64_t total_epochs,
                                   double mean_task_loss, double mean_kl_term,
                                   double mean_total_loss, double eval_metric, void* user);

/* Trains per the config file, writing metrics.csv and checkpoints under
 * out_dir. resume_checkpoint may be NULL. */
sfc_status sfc_train_run(const char* config_path, const char* out_dir,
                         const char* resume_checkpoint, sfc_train_callback cb, void* user);

/* Evaluates a checkpoint on a dataset directory (manifest.csv layout). */
sfc_status sfc_evaluate_dir(const char* checkpoint_path, const char* data_dir,
                            double* metric_out);

/* kind is "classify" or "segment"; writes a dataset directory. */
sfc_status sfc_synth_write(const char* kind, uint64_t n, uint64_t seed, const char* out_dir);

/* Per-image moment statistics over a dataset directory or a directory of
 * .tnsr/.pgm/.ppm files, as CSV (path,n,skewness,kurtosis). Multi-channel
 * images are reduced to gray first. NULL out_csv writes to stdout. When
 * hist_dir is non-NULL, one histogram CSV per image is written there. */
sfc_status sfc_image_stats_csv(const char* input_dir, uint32_t bins, const char* hist_dir,
                               const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* SFCONV_H */
