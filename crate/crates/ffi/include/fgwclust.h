#ifndef FGWCLUST_H
#define FGWCLUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FgwStatus {
  FGW_STATUS_OK = 0,
  FGW_STATUS_NULL_POINTER = 1,
  FGW_STATUS_INVALID_ARGUMENT = 2,
  FGW_STATUS_IO = 3,
  FGW_STATUS_FORMAT = 4,
  FGW_STATUS_SHAPE = 5,
  FGW_STATUS_CONFIG = 6,
  FGW_STATUS_NUMERICAL = 7,
  FGW_STATUS_PANIC = 8,
} FgwStatus;

// Attributed graph handle.
typedef struct FgwGraph FgwGraph;

// Trained model handle.
typedef struct FgwModel FgwModel;

// Clustering scores, all in `[0, 1]` except ARI, which is at least -1.
typedef struct FgwMetrics {
  double acc;
  double macro_f1;
  double nmi;
  double ari;
} FgwMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *fgw_version(void);

// Message of the last failure on this thread, or null.
const char *fgw_last_error(void);

// Loads `edges.txt`, `features.fgm` or `features.csv`, and optional `labels.txt` from `dir`.
enum FgwStatus fgw_graph_load(const char *dir, struct FgwGraph **out);

// Builds a graph from `n_nodes x n_features` features and `n_edges` undirected
// `(u, v)` pairs stored flat in `edges`. `labels` may be null.
enum FgwStatus fgw_graph_new(const double *features,
                             size_t n_nodes,
                             size_t n_features,
                             const uint64_t *edges,
                             size_t n_edges,
                             const uint64_t *labels,
                             struct FgwGraph **out);

size_t fgw_graph_n_nodes(const struct FgwGraph *g);

size_t fgw_graph_n_features(const struct FgwGraph *g);

// Number of undirected edges.
size_t fgw_graph_n_edges(const struct FgwGraph *g);

void fgw_graph_free(struct FgwGraph *g);

// Entropic OT between `n` rows and `s` columns under `cost`; writes the `n x s` plan.
enum FgwStatus fgw_sinkhorn(const double *cost,
                            size_t n,
                            size_t s,
                            const double *mu,
                            const double *nu,
                            double epsilon,
                            double *out_plan);

// Entropic fused GW between the graph's adjacency (with `cost` over its nodes) and
// an `s x s` structure `b` with entries in `[0, 1]`; writes the `n x s` plan.
enum FgwStatus fgw_fused_gw(const double *cost,
                            const struct FgwGraph *graph,
                            const double *b,
                            size_t s,
                            const double *mu,
                            const double *nu,
                            double alpha,
                            double epsilon,
                            double *out_plan);

// Trains on `graph`. `config_json` is a JSON training config; null or `"{}"` uses
// the defaults.
enum FgwStatus fgw_train(const struct FgwGraph *graph,
                         const char *config_json,
                         struct FgwModel **out);

size_t fgw_model_n_prototypes(const struct FgwModel *m);

// Input feature width the model expects.
size_t fgw_model_input_dim(const struct FgwModel *m);

// Number of recorded epochs, the length `fgw_model_loss_trace` writes.
size_t fgw_model_n_epochs(const struct FgwModel *m);

enum FgwStatus fgw_model_loss_trace(const struct FgwModel *m, double *out);

// Writes the `n_nodes x n_prototypes` prototype similarities of every node.
enum FgwStatus fgw_model_infer(const struct FgwModel *m, const struct FgwGraph *graph, double *out);

enum FgwStatus fgw_model_save(const struct FgwModel *m, const char *path);

enum FgwStatus fgw_model_load(const char *path, struct FgwModel **out);

void fgw_model_free(struct FgwModel *m);

// K-means with k-means++ seeding over the `n x d` rows of `x`; writes `n` labels in
// `[0, k)` from the lowest-inertia of `n_init` restarts.
enum FgwStatus fgw_kmeans(const double *x,
                          size_t n,
                          size_t d,
                          size_t k,
                          size_t n_init,
                          uint64_t seed,
                          uint64_t *out_labels,
                          double *out_inertia);

// Scores `n` predicted cluster ids in `[0, n_clusters)` against class ids in
// `[0, n_classes)`. Accuracy and macro-F1 use the optimal one-to-one matching.
enum FgwStatus fgw_evaluate(const uint64_t *pred,
                            const uint64_t *truth,
                            size_t n,
                            size_t n_clusters,
                            size_t n_classes,
                            struct FgwMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FGWCLUST_H */
