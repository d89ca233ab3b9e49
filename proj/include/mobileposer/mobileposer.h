#ifndef MOBILEPOSER_MOBILEPOSER_H
#define MOBILEPOSER_MOBILEPOSER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MP_API __declspec(dllexport)
#else
#define MP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every function returning mp_status leaves a message for the
   calling thread in mp_last_error() when it fails. */
typedef enum mp_status {
  MP_OK = 0,
  MP_ERR_USAGE = 1,
  MP_ERR_PARSE = 2,
  MP_ERR_INVARIANT = 3,
  MP_ERR_DEGENERATE_INPUT = 4,
  MP_ERR_NO_SKIN = 5,
  MP_ERR_MISSING_READING = 6,
  MP_ERR_TOO_SHORT = 7,
  MP_ERR_SHAPE_MISMATCH = 8,
  MP_ERR_HORIZON_TOO_LONG = 9,
  MP_ERR_NON_FINITE_GRADIENT = 10,
  MP_ERR_TOO_NOISY = 11,
  MP_ERR_LENGTH_MISMATCH = 12,
  MP_ERR_CHANNEL_MISSING = 13,
  MP_ERR_DIM_MISMATCH = 14,
  MP_ERR_MANIFEST_INVALID = 15,
  MP_ERR_UNCALIBRATED = 16,
  MP_ERR_PROTOCOL = 17,
  MP_ERR_IO = 18,
  MP_ERR_VERSION_UNSUPPORTED = 19,
  MP_ERR_RUNTIME = 20
} mp_status;

/* Sensor sites in model input order. */
typedef enum mp_location {
  MP_LOC_RIGHT_POCKET = 0,
  MP_LOC_LEFT_POCKET = 1,
  MP_LOC_RIGHT_WRIST = 2,
  MP_LOC_LEFT_WRIST = 3,
  MP_LOC_HEAD = 4
} mp_location;

typedef struct mp_rig mp_rig;
typedef struct mp_model mp_model;
typedef struct mp_estimator mp_estimator;
typedef struct mp_server mp_server;

/* One device sample: specific force in m/s^2 (gravity included) in the
   device frame, and the device-to-inertial rotation, row-major. */
typedef struct mp_reading {
  int location;
  double acc[3];
  double rot[9];
} mp_reading;

typedef struct mp_pose {
  double joints[72];   /* root-relative joint positions, m */
  double rots[162];    /* local rotations of the 18 predicted joints, row-major */
  double trans[3];     /* root translation, m */
  double contacts[2];  /* left, right foot contact probability */
  double v_e[3];       /* regressed root velocity, heading frame, m/frame */
  double v_f[3];       /* supporting-foot root velocity */
  double v_fused[3];
} mp_pose;

MP_API const char* mp_version(void);
MP_API const char* mp_status_name(mp_status status);
/* Message of the last failure on this thread; empty after success. */
MP_API const char* mp_last_error(void);
/* Frees strings returned through char** out-parameters. */
MP_API void mp_string_free(char* s);

/* Configuration is JSON. Missing keys take defaults; mp_default_config
   returns the full document. */
MP_API mp_status mp_default_config(char** out_json);
/* Validates a (partial) config and returns it with every default filled in. */
MP_API mp_status mp_config_resolve(const char* config_json, char** out_json);

/* path NULL or "" selects the built-in rig. */
MP_API mp_status mp_rig_load(const char* path, mp_rig** out);
MP_API mp_status mp_rig_info(const mp_rig* rig, char** out_json);
MP_API void mp_rig_free(mp_rig* rig);

MP_API mp_status mp_model_load(const char* path, mp_model** out);
/* Fresh weights from the config's model section and seed. */
MP_API mp_status mp_model_create(const char* config_json, mp_model** out);
MP_API mp_status mp_model_save(const mp_model* model, const char* path);
MP_API void mp_model_free(mp_model* model);

/* The estimator keeps its own references to model and rig; the handles may
   be freed afterwards. With refiner.enabled the pose is refined. */
MP_API mp_status mp_estimator_create(const mp_model* model, const mp_rig* rig, const char* config_json,
                                     mp_estimator** out);
MP_API mp_status mp_estimator_set_combo(mp_estimator* est, const char* combo_id);
/* T-pose calibration from `frames` frames of `per_frame` readings each. */
MP_API mp_status mp_estimator_calibrate(mp_estimator* est, const mp_reading* readings, size_t per_frame,
                                        size_t frames);
MP_API mp_status mp_estimator_step(mp_estimator* est, const mp_reading* readings, size_t count, mp_pose* out);
/* One already calibrated, packed 60-value input frame. */
MP_API mp_status mp_estimator_step_packed(mp_estimator* est, const double* input60, mp_pose* out);
MP_API mp_status mp_estimator_reset(mp_estimator* est);
MP_API void mp_estimator_free(mp_estimator* est);

/* Batch commands: a JSON request in, a JSON result out (free with
   mp_string_free). Commands: synth, train, eval, bench, import, export,
   rig-info, demo. */
MP_API mp_status mp_run(const char* command, const char* request_json, char** out_json);

/* Progress lines (training epochs) go to this callback; NULL silences them. */
typedef void (*mp_log_fn)(const char* line, void* user);
MP_API void mp_set_log(mp_log_fn fn, void* user);

/* Streaming server on host:port (port 0 picks one). */
MP_API mp_status mp_server_start(const mp_model* model, const mp_rig* rig, const char* config_json, const char* host,
                                 int port, mp_server** out);
MP_API int mp_server_port(const mp_server* server);
MP_API mp_status mp_server_stop(mp_server* server);
MP_API void mp_server_free(mp_server* server);

#ifdef __cplusplus
}
#endif

#endif
