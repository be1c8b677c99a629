#ifndef VTELOS_H
#define VTELOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VtStatus {
  VT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  VT_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not UTF-8.
   */
  VT_STATUS_INVALID_UTF8 = 2,
  /**
   * A file could not be read or written.
   */
  VT_STATUS_IO = 3,
  /**
   * Schema source or file is malformed, fails validation or is not frozen.
   */
  VT_STATUS_INVALID_SCHEMA = 4,
  /**
   * Unknown property, value outside its domain, bad box or malformed JSON.
   */
  VT_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Unknown image or region.
   */
  VT_STATUS_NOT_FOUND = 6,
  /**
   * The region is finalized, the property is not asserted, or the result
   * is partial and partial results were not accepted.
   */
  VT_STATUS_CONFLICT = 7,
  /**
   * An internal error; the call had no effect that can be relied on.
   */
  VT_STATUS_INTERNAL = 8,
} VtStatus;

/**
 * A frozen schema.
 */
typedef struct VtSchema VtSchema;

/**
 * A classifier session over one schema.
 */
typedef struct VtSession VtSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or an empty string.
 * Valid until the next call on the same thread.
 */
const char *vt_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void vt_string_free(char *s);

/**
 * Loads a schema from a `.vtsf` file or from schema source, freezing
 * source on the way in.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VtStatus vt_schema_load(const char *path, struct VtSchema **out);

/**
 * Parses, validates and freezes schema source text.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum VtStatus vt_schema_from_source(const char *source, struct VtSchema **out);

/**
 * # Safety
 * `schema` must be null or a handle from this library not yet freed.
 */
void vt_schema_free(struct VtSchema *schema);

/**
 * The schema's version stamp, `sha256:<hex>`. Owned by the handle.
 *
 * # Safety
 * `schema` must be null or a live handle.
 */
const char *vt_schema_stamp(const struct VtSchema *schema);

/**
 * Resolves a JSON object of property assertions, for example
 * `{"sound_production": "string_vibration", "taut_string_count": 6}`,
 * and writes the resolution result as JSON.
 *
 * # Safety
 * `schema` must be a live handle, `assertions` a NUL-terminated string and
 * `out` writable.
 */
enum VtStatus vt_schema_resolve(const struct VtSchema *schema, const char *assertions, char **out);

/**
 * Opens a classifier session over `image_count` image ids. The session
 * keeps the schema alive; the schema handle may be freed first.
 *
 * # Safety
 * `schema` must be a live handle, the id strings NUL-terminated, `images`
 * an array of `image_count` NUL-terminated strings (or null when the count
 * is zero) and `out` writable.
 */
enum VtStatus vt_session_open(const struct VtSchema *schema,
                              const char *session_id,
                              const char *annotator_id,
                              const char *const *images,
                              size_t image_count,
                              struct VtSession **out);

/**
 * # Safety
 * `session` must be null or a handle from this library not yet freed.
 */
void vt_session_free(struct VtSession *session);

/**
 * Draws a box on a queued image and writes the new region id.
 *
 * # Safety
 * `session` must be a live handle, `image` NUL-terminated and
 * `region_id` writable.
 */
enum VtStatus vt_session_localize(struct VtSession *session,
                                  const char *image,
                                  uint32_t x,
                                  uint32_t y,
                                  uint32_t width,
                                  uint32_t height,
                                  char **region_id);

/**
 * Asserts `property = value` on a region, with the value written as in
 * schema source (`6`, `string_vibration`, `present`), and writes the new
 * resolution as JSON.
 *
 * # Safety
 * `session` must be a live handle, the strings NUL-terminated and
 * `resolution` writable.
 */
enum VtStatus vt_session_assert(struct VtSession *session,
                                const char *region,
                                const char *property,
                                const char *value,
                                char **resolution);

/**
 * Withdraws an assertion and writes the new resolution as JSON.
 *
 * # Safety
 * `session` must be a live handle, the strings NUL-terminated and
 * `resolution` writable.
 */
enum VtStatus vt_session_retract(struct VtSession *session,
                                 const char *region,
                                 const char *property,
                                 char **resolution);

/**
 * Finalizes a region and writes its annotation record as JSON. Label and
 * concept id come from the schema.
 *
 * # Safety
 * `session` must be a live handle, `region` NUL-terminated and `record`
 * writable.
 */
enum VtStatus vt_session_finalize(struct VtSession *session,
                                  const char *region,
                                  bool accept_partial,
                                  char **record);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VTELOS_H */
