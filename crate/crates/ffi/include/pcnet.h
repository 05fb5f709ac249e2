#ifndef PCNET_H
#define PCNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PcnetStatus {
  PCNET_STATUS_OK = 0,
  PCNET_STATUS_NULL_POINTER = 1,
  PCNET_STATUS_INVALID_ARGUMENT = 2,
  PCNET_STATUS_SHAPE_MISMATCH = 3,
  PCNET_STATUS_ENCODING_DOMAIN = 4,
  PCNET_STATUS_IO = 5,
  PCNET_STATUS_CHECKPOINT = 6,
  PCNET_STATUS_GRADCHECK_FAILED = 7,
  PCNET_STATUS_PANIC = 8,
} PcnetStatus;

typedef enum PcnetModelKind {
  PCNET_MODEL_KIND_PC = 0,
  PCNET_MODEL_KIND_BP = 1,
} PcnetModelKind;

typedef enum PcnetActivation {
  PCNET_ACTIVATION_SIGMOID = 0,
  PCNET_ACTIVATION_TANH = 1,
  PCNET_ACTIVATION_RELU = 2,
  PCNET_ACTIVATION_IDENTITY = 3,
} PcnetActivation;

typedef enum PcnetEncoding {
  PCNET_ENCODING_SUBTRACTIVE = 0,
  PCNET_ENCODING_THRESHOLD = 1,
  PCNET_ENCODING_DIVISION = 2,
} PcnetEncoding;

typedef enum PcnetFeedback {
  PCNET_FEEDBACK_TRANSPOSE = 0,
  PCNET_FEEDBACK_RANDOM = 1,
  PCNET_FEEDBACK_KOLEN_POLLACK = 2,
} PcnetFeedback;

/**
 * A model with its optimizer state and relaxation settings.
 */
typedef struct PcnetLearner PcnetLearner;

/**
 * Model and training settings. Fill with [`pcnet_config_default`] and
 * override fields as needed. `dims` points at `n_dims` layer widths,
 * input first; it is only read during the call that receives the config.
 */
typedef struct PcnetConfig {
  const size_t *dims;
  size_t n_dims;
  enum PcnetModelKind model;
  enum PcnetActivation hidden_activation;
  enum PcnetEncoding encoding;
  enum PcnetFeedback feedback;
  bool positive_activities;
  bool encode_output;
  double bias;
  double gamma;
  double epsilon;
  double e_min;
  double e_max;
  double lr;
  double beta;
  uint32_t n_updates;
  uint64_t seed;
} PcnetConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Write the default configuration (784-300-300-10 predictive-coding
 * network, sigmoid, subtractive errors, transpose feedback, lr 0.001,
 * beta 0.1, 20 activity steps) into `out`.
 */
enum PcnetStatus pcnet_config_default(struct PcnetConfig *out);

/**
 * Create a freshly initialized learner. On success `*out` owns a handle
 * to release with [`pcnet_learner_free`].
 */
enum PcnetStatus pcnet_learner_new(const struct PcnetConfig *config, struct PcnetLearner **out);

/**
 * Release a learner. Null is ignored.
 */
void pcnet_learner_free(struct PcnetLearner *learner);

/**
 * Width of the input layer, or 0 for a null handle.
 */
size_t pcnet_learner_input_dim(const struct PcnetLearner *learner);

/**
 * Width of the output layer, or 0 for a null handle.
 */
size_t pcnet_learner_output_dim(const struct PcnetLearner *learner);

/**
 * One minibatch: relaxation (predictive coding) or backprop, then an Adam
 * step. `x` holds `batch` inputs, `y` the matching targets. If
 * `objective` is non-null it receives the batch objective.
 */
enum PcnetStatus pcnet_learner_train_batch(struct PcnetLearner *learner,
                                           const double *x,
                                           const double *y,
                                           size_t batch,
                                           double *objective);

/**
 * Pure forward sweep. `out` must hold `batch * output_dim` doubles and is
 * filled sample-major.
 */
enum PcnetStatus pcnet_learner_predict(const struct PcnetLearner *learner,
                                       const double *x,
                                       size_t batch,
                                       double *out);

/**
 * Save the model and optimizer state to a checkpoint file.
 */
enum PcnetStatus pcnet_learner_save(const struct PcnetLearner *learner,
                                    const char *path,
                                    uint32_t epoch);

/**
 * Load a checkpoint into a new learner. The relaxation settings are not
 * part of the file and are given here. A checkpoint without optimizer
 * state resumes with fresh Adam moments at `lr` 0.001.
 */
enum PcnetStatus pcnet_learner_load(const char *path,
                                    double beta,
                                    uint32_t n_updates,
                                    struct PcnetLearner **out);

/**
 * Finite-difference check on a `[5, 4, 3]` network with the modelling
 * choices of `config` (its dims are ignored). Writes the largest relative
 * error among gradient-exact checks to `max_rel_error` when non-null and
 * returns `PCNET_STATUS_GRADCHECK_FAILED` if any exceeds 1e-4.
 */
enum PcnetStatus pcnet_gradcheck(const struct PcnetConfig *config, double *max_rel_error);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pcnet_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCNET_H */
