#ifndef GRANET_H
#define GRANET_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum GranetStatus {
  GRANET_STATUS_OK = 0,
  GRANET_STATUS_NULL_POINTER = 1,
  GRANET_STATUS_INVALID_ARGUMENT = 2,
  GRANET_STATUS_PARSE = 3,
  GRANET_STATUS_SHAPE = 4,
  GRANET_STATUS_INVALID_GRAPH = 5,
  GRANET_STATUS_IO = 6,
  GRANET_STATUS_NON_FINITE_LOSS = 7,
  GRANET_STATUS_PANIC = 8,
} GranetStatus;

typedef enum GranetSplit {
  GRANET_SPLIT_TRAIN = 0,
  GRANET_SPLIT_VAL = 1,
  GRANET_SPLIT_TEST = 2,
} GranetSplit;

// A node-classification graph.
typedef struct GranetGraph GranetGraph;

// A layered model with its parameters.
typedef struct GranetModel GranetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until
// the next call into the library on the same thread.
const char *granet_last_error(void);

// Loads `edges.tsv`, `features.txt`, `labels.tsv` and `splits.tsv` from
// `dir`.
//
// # Safety
// `dir` must be a nul-terminated string; `out` must be writable.
enum GranetStatus granet_graph_load(const char *dir, bool symmetrize, struct GranetGraph **out);

// Stochastic block model graph with equal intra- and inter-class degree.
//
// # Safety
// `out` must be writable.
enum GranetStatus granet_graph_synthetic(size_t nodes,
                                         size_t classes,
                                         double homophily,
                                         double noise,
                                         double degree,
                                         uint64_t seed,
                                         struct GranetGraph **out);

// Node count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t granet_graph_num_nodes(const struct GranetGraph *graph);

// # Safety
// `graph` must be null or a live handle.
size_t granet_graph_num_edges(const struct GranetGraph *graph);

// # Safety
// `graph` must be null or a live handle.
size_t granet_graph_num_features(const struct GranetGraph *graph);

// # Safety
// `graph` must be null or a live handle.
size_t granet_graph_num_classes(const struct GranetGraph *graph);

// # Safety
// `graph` must be null or a handle not yet freed.
void granet_graph_free(struct GranetGraph *graph);

// Model from an architecture file, initialized with `seed`.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum GranetStatus granet_model_new(const char *path, uint64_t seed, struct GranetModel **out);

// Copies checkpoint values into matching parameters. Writes the number
// of parameters loaded to `loaded` when it is not null.
//
// # Safety
// `model` must be live, `path` nul-terminated, `loaded` null or writable.
enum GranetStatus granet_model_load_checkpoint(const struct GranetModel *model,
                                               const char *path,
                                               size_t *loaded);

// # Safety
// `model` must be live and `path` nul-terminated.
enum GranetStatus granet_model_save_checkpoint(const struct GranetModel *model, const char *path);

// Output width of the model's last layer, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t granet_model_out_dim(const struct GranetModel *model);

// Full-graph forward pass. Writes `nodes x out_dim` row-major values to
// `out`, which must hold `len` doubles.
//
// # Safety
// Handles must be live; `out` must point to `len` writable doubles.
enum GranetStatus granet_model_predict(const struct GranetModel *model,
                                       const struct GranetGraph *graph,
                                       double *out,
                                       size_t len);

// Accuracy on one split.
//
// # Safety
// Handles must be live; `accuracy` must be writable.
enum GranetStatus granet_model_evaluate(const struct GranetModel *model,
                                        const struct GranetGraph *graph,
                                        enum GranetSplit split,
                                        double *accuracy);

// # Safety
// `model` must be null or a handle not yet freed.
void granet_model_free(struct GranetModel *model);

// Trains the run config at `config_path` with `seed`. Writes the
// per-epoch metrics CSV to `metrics_path` unless it is null, and the
// final-epoch and best-validation-epoch test accuracies to the outputs
// that are not null.
//
// # Safety
// Strings must be nul-terminated; outputs null or writable.
enum GranetStatus granet_train(const char *config_path,
                               uint64_t seed,
                               const char *metrics_path,
                               double *final_test_acc,
                               double *best_val_test_acc);

// Largest finite-difference relative error of `layer` (a kind name such
// as "gatv2") over `trials` random trials.
//
// # Safety
// `layer` must be nul-terminated; `max_error` writable.
enum GranetStatus granet_gradcheck(const char *layer,
                                   size_t trials,
                                   uint64_t seed,
                                   double *max_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRANET_H */
