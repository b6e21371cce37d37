#ifndef SCENE_ATLAS_H
#define SCENE_ATLAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SaStatus {
  SA_STATUS_OK = 0,
  SA_STATUS_NULL_ARGUMENT = 1,
  SA_STATUS_INVALID_ARGUMENT = 2,
  SA_STATUS_NOT_FOUND = 3,
  SA_STATUS_BUSY = 4,
  SA_STATUS_PRECONDITION = 5,
  SA_STATUS_IO = 6,
  SA_STATUS_DECODE = 7,
  SA_STATUS_NUMERIC = 8,
  SA_STATUS_TOOL = 9,
  SA_STATUS_CONFIG = 10,
  SA_STATUS_TRANSPORT = 11,
  SA_STATUS_BUFFER_TOO_SMALL = 12,
  SA_STATUS_PANIC = 13,
} SaStatus;

/**
 * A chat session over one scene, driven by the rule-based planner.
 */
typedef struct SaChat SaChat;

/**
 * A standalone double-precision hash-grid encoder.
 */
typedef struct SaHashGrid SaHashGrid;

/**
 * An opened scene directory.
 */
typedef struct SaScene SaScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *sa_last_error(void);

/**
 * Library version as a static string.
 */
const char *sa_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sa_string_free(char *s);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SaStatus sa_scene_open(const char *path, struct SaScene **out);

/**
 * # Safety
 * `scene` must come from [`sa_scene_open`] and not have been freed.
 */
void sa_scene_free(struct SaScene *scene);

/**
 * Writes the view count and frame size of a scene.
 *
 * # Safety
 * `scene` must be live; the output pointers must be writable.
 */
enum SaStatus sa_scene_info(const struct SaScene *scene,
                            size_t *views,
                            size_t *width,
                            size_t *height,
                            bool *trained);

/**
 * Fits the scene. `config_path` may be null for the default schedule;
 * `steps` of 0 keeps the configured step count. Writes the final total
 * loss to `final_loss` when it is non-null.
 *
 * # Safety
 * `scene` must be live; `config_path` null or NUL-terminated.
 */
enum SaStatus sa_scene_train(const struct SaScene *scene,
                             const char *config_path,
                             size_t steps,
                             uint64_t seed,
                             double *final_loss);

/**
 * Runs one tool. `args` is a comma-separated list (may be null). On an
 * edit the new edit id is returned through `out_id`; image and text tools
 * return their artifact id or answer the same way.
 *
 * # Safety
 * `scene` must be live; strings NUL-terminated; `out_id` writable.
 */
enum SaStatus sa_scene_edit(const struct SaScene *scene,
                            const char *tool,
                            const char *args,
                            const char *parent,
                            uint64_t seed,
                            char **out_id);

/**
 * Renders view `view` as packed 8-bit RGB into `buf` (`width·height·3`
 * bytes). With `edit_id` null the fitted fields are evaluated; otherwise
 * the stored frames of that edit are returned.
 *
 * # Safety
 * `scene` must be live; `buf` must hold `len` writable bytes.
 */
enum SaStatus sa_scene_render_view(const struct SaScene *scene,
                                   const char *edit_id,
                                   size_t view,
                                   uint8_t *buf,
                                   size_t len);

/**
 * Creates an encoder with the default level layout and tables drawn
 * from `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SaStatus sa_hashgrid_new(uint64_t seed, struct SaHashGrid **out);

/**
 * # Safety
 * `grid` must come from [`sa_hashgrid_new`] and not have been freed.
 */
void sa_hashgrid_free(struct SaHashGrid *grid);

/**
 * Feature count produced per point; 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or live.
 */
size_t sa_hashgrid_output_dim(const struct SaHashGrid *grid);

/**
 * Encodes `(u, v)` in `[0, 1]²` into `out[0..len]`.
 *
 * # Safety
 * `grid` must be live; `out` must hold `len` writable doubles.
 */
enum SaStatus sa_hashgrid_encode(const struct SaHashGrid *grid,
                                 double u,
                                 double v,
                                 double *out,
                                 size_t len);

/**
 * Opens a session on the scene at `scene_path`. `rules_path` may be null
 * for the built-in rules.
 *
 * # Safety
 * Strings must be NUL-terminated (or null where allowed); `out` writable.
 */
enum SaStatus sa_chat_new(const char *scene_path,
                          const char *rules_path,
                          uint64_t seed,
                          struct SaChat **out);

/**
 * # Safety
 * `chat` must come from [`sa_chat_new`] and not have been freed.
 */
void sa_chat_free(struct SaChat *chat);

/**
 * Runs one user turn; the assistant reply is returned through `reply`.
 *
 * # Safety
 * `chat` must be live; `message` NUL-terminated; `reply` writable.
 */
enum SaStatus sa_chat_send(struct SaChat *chat, const char *message, char **reply);

/**
 * Handle of the scene the session currently works on.
 *
 * # Safety
 * `chat` must be live; `out` writable.
 */
enum SaStatus sa_chat_scene(const struct SaChat *chat, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENE_ATLAS_H */
