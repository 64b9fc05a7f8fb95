#ifndef RIGPOSE_H
#define RIGPOSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum RigposeStatus {
  RIGPOSE_STATUS_OK = 0,
  RIGPOSE_STATUS_NULL_POINTER = 1,
  /*
   Malformed JSON, bad camera index, invalid rig or config.
   */
  RIGPOSE_STATUS_INVALID_INPUT = 2,
  /*
   The estimate could not be computed (degenerate geometry, divergence).
   */
  RIGPOSE_STATUS_NUMERICAL = 3,
  /*
   A Rust panic was caught at the boundary.
   */
  RIGPOSE_STATUS_INTERNAL = 4,
} RigposeStatus;

typedef enum RigposeLayout {
  RIGPOSE_LAYOUT_OVERLAPPING = 0,
  RIGPOSE_LAYOUT_NON_OVERLAPPING = 1,
} RigposeLayout;

/*
 Opaque Monte Carlo report.
 */
typedef struct RigposeReport RigposeReport;

/*
 Opaque camera rig.
 */
typedef struct RigposeRig RigposeRig;

/*
 Motion of one camera in its own initial frame.
 */
typedef struct RigposeLocalMotion {
  double translation[3];
  /*
   Rotation angles (alpha, beta, gamma) of the camera's own rotation, radians.
   */
  double angles[3];
} RigposeLocalMotion;

typedef struct RigposeFusedPose {
  /*
   tx, ty, tz, alpha, beta, gamma of the reference camera.
   */
  double pose[6];
  double scales[4];
  /*
   Nonzero when the scale system was degenerate and `scales` are the previous ones.
   */
  int32_t ill_conditioned;
  double condition;
} RigposeFusedPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the most recent failure on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *rigpose_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *rigpose_version(void);

/*
 The built-in four-camera rig of the given layout (500 px focal length, 640x480).

 # Safety
 `layout` must be one of the declared values and `out` a valid pointer.
 */
enum RigposeStatus rigpose_rig_default(enum RigposeLayout layout, struct RigposeRig **out);

/*
 Parses a rig file's JSON text.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RigposeStatus rigpose_rig_from_json(const char *json, struct RigposeRig **out);

/*
 Number of cameras, or 0 for a null rig.

 # Safety
 `rig` must be null or a rig returned by this library.
 */
size_t rigpose_rig_camera_count(const struct RigposeRig *rig);

/*
 # Safety
 `rig` must be null or a rig returned by this library that has not been freed.
 */
void rigpose_rig_free(struct RigposeRig *rig);

/*
 Pixel of world point `point` in camera `camera` (0-based) with the rig at `pose`
 (tx, ty, tz, alpha, beta, gamma).

 # Safety
 `rig` must be a live rig; `pose`, `point` and `pixel` must point to 6, 3 and 2
 doubles.
 */
enum RigposeStatus rigpose_project(const struct RigposeRig *rig,
                                   size_t camera,
                                   const double *pose,
                                   const double *point,
                                   double *pixel);

/*
 Fuses four per-camera local motions (camera order) into the reference pose,
 solving the scale system or carrying `prev_scales` over when it is degenerate.

 # Safety
 `rig` must be a live four-camera rig; `motions` must point to 4 elements,
 `prev_scales` to 4 doubles and `out` to writable storage.
 */
enum RigposeStatus rigpose_fuse_pose(const struct RigposeRig *rig,
                                     const struct RigposeLocalMotion *motions,
                                     const double *prev_scales,
                                     struct RigposeFusedPose *out);

/*
 Runs the Monte Carlo study. `config_json` may be null for the defaults;
 `threads` = 0 uses every core.

 # Safety
 `config_json` must be null or NUL-terminated; `out` must be a valid pointer.
 */
enum RigposeStatus rigpose_simulate(const char *config_json,
                                    uint32_t threads,
                                    struct RigposeReport **out);

/*
 Number of method rows, or 0 for a null report.

 # Safety
 `report` must be null or a live report.
 */
size_t rigpose_report_row_count(const struct RigposeReport *report);

/*
 Runs that produced a usable result, or 0 for a null report.

 # Safety
 `report` must be null or a live report.
 */
size_t rigpose_report_valid_runs(const struct RigposeReport *report);

/*
 Method name of row `row` ("4cameras", "cam1", "RC", ...), owned by the report;
 null when out of range.

 # Safety
 `report` must be null or a live report.
 */
const char *rigpose_report_method(const struct RigposeReport *report, size_t row);

/*
 Mean absolute errors (tx, ty, tz, alpha, beta, gamma) of row `row`.

 # Safety
 `report` must be a live report and `errors` must point to 6 doubles.
 */
enum RigposeStatus rigpose_report_errors(const struct RigposeReport *report,
                                         size_t row,
                                         double *errors);

/*
 The report as CSV text. Release with [`rigpose_string_free`].

 # Safety
 `report` must be a live report and `out` a valid pointer.
 */
enum RigposeStatus rigpose_report_csv(const struct RigposeReport *report, char **out);

/*
 # Safety
 `report` must be null or a live report.
 */
void rigpose_report_free(struct RigposeReport *report);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void rigpose_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIGPOSE_H */
