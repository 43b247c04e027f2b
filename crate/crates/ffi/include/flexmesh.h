#ifndef FLEXMESH_H
#define FLEXMESH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_IO = 3,
  FM_STATUS_DATA = 4,
  FM_STATUS_PANIC = 5,
} FmStatus;

// Triangle mesh handle.
typedef struct FmMesh FmMesh;

// Trained model handle.
typedef struct FmModel FmModel;

// One observation frame for [`fm_model_infer`]. Unused inputs may be null
// or zero; which ones are required depends on the model's modality.
typedef struct FmFrame {
  // `point_count * 3` doubles, or null.
  const double *points;
  size_t point_count;
  // Row-major `depth_width * depth_height` depths, or null.
  const double *depth;
  size_t depth_width;
  size_t depth_height;
  // Nonzero when `force` and `contact` hold a robot reading.
  int32_t has_robot;
  double force[3];
  double contact[3];
} FmFrame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *fm_last_error(void);

// Builds a mesh from `vertex_count * 3` coordinates and `face_count * 3`
// zero-based vertex indices.
//
// # Safety
// Array pointers must be valid for the given counts; `out` must be writable.
enum FmStatus fm_mesh_new(const double *vertices,
                          size_t vertex_count,
                          const uint32_t *faces,
                          size_t face_count,
                          struct FmMesh **out_mesh);

// # Safety
// `path` must be a NUL-terminated string; `out_mesh` must be writable.
enum FmStatus fm_mesh_load_obj(const char *path, struct FmMesh **out_mesh);

// # Safety
// `mesh` must come from this library; `path` must be NUL-terminated.
enum FmStatus fm_mesh_save_obj(const struct FmMesh *mesh, const char *path);

// Vertex count, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or come from this library.
size_t fm_mesh_vertex_count(const struct FmMesh *mesh);

// Face count, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or come from this library.
size_t fm_mesh_face_count(const struct FmMesh *mesh);

// Copies vertex coordinates into `out`, which must hold `vertex_count * 3`
// doubles.
//
// # Safety
// `out` must be writable for `capacity` doubles.
enum FmStatus fm_mesh_vertices(const struct FmMesh *mesh, double *out_coords, size_t capacity);

// # Safety
// `mesh` must be null or a handle from this library not yet freed.
void fm_mesh_free(struct FmMesh *mesh);

// Volumetric Jaccard index of two watertight meshes on a `resolution`³
// grid over their joint bounding box.
//
// # Safety
// Handles must come from this library; `out_j` must be writable.
enum FmStatus fm_jaccard_index(const struct FmMesh *a,
                               const struct FmMesh *b,
                               size_t resolution,
                               double *out_j);

// Unidirectional L1 chamfer distance from `p` to `q`, in millimetres for
// inputs in metres.
//
// # Safety
// `p` and `q` must hold `3 * count` doubles; `out_mm` must be writable.
enum FmStatus fm_chamfer_l1(const double *p,
                            size_t p_count,
                            const double *q,
                            size_t q_count,
                            double *out_mm);

// Hooke stiffness `k` (N/m) from displacement (m) and force (N) pairs by
// zero-intercept RANSAC.
//
// # Safety
// `displacement` and `force` must hold `count` doubles; `out_k` must be
// writable.
enum FmStatus fm_estimate_stiffness(const double *displacement,
                                    const double *force,
                                    size_t count,
                                    size_t iterations,
                                    double inlier_tol,
                                    uint64_t seed,
                                    double *out_k);

// # Safety
// `path` must be NUL-terminated; `out_model` must be writable.
enum FmStatus fm_model_load(const char *path, struct FmModel **out_model);

// Observation frames the model attends over, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
size_t fm_model_history(const struct FmModel *model);

// Deforms `template` from the most recent `frame_count` frames, oldest
// first, and returns the result as a new mesh.
//
// # Safety
// Handles must come from this library; `frames` must hold `frame_count`
// entries whose arrays are valid for their counts.
enum FmStatus fm_model_infer(const struct FmModel *model,
                             const struct FmMesh *template_,
                             const struct FmFrame *frames,
                             size_t frame_count,
                             struct FmMesh **out_mesh);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void fm_model_free(struct FmModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLEXMESH_H */
