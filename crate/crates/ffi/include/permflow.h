#ifndef PERMFLOW_H
#define PERMFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum PfStatus {
  // Success; for check, infer and nitest the verdict was positive.
  PF_OK = 0,
  // The analysis ran and the verdict was negative (ill-typed, unsatisfiable, a violation).
  PF_NEGATIVE = 1,
  // A null pointer, bad UTF-8, unknown name or malformed argument.
  PF_INVALID_ARGUMENT = 2,
  // The source did not parse or failed well-formedness checks.
  PF_PARSE_ERROR = 3,
  // The interpreter ran out of fuel.
  PF_FUEL_EXHAUSTED = 4,
  // Any other runtime failure, including a caught panic.
  PF_INTERNAL = 5,
} PfStatus;

// A parsed, well-formed system.
typedef struct PfSystem PfSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *pf_version(void);

// Message for the last failed call on this thread, or null. Valid until the next call.
const char *pf_last_error(void);

// Parses `source` and stores a new handle in `*out`.
//
// # Safety
// `source` must be a valid NUL-terminated string and `out` a writable pointer.
enum PfStatus pf_system_parse(const char *source, struct PfSystem **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `sys` must come from [`pf_system_parse`] and not have been freed.
void pf_system_free(struct PfSystem *sys);

// Number of functions in the system, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t pf_system_function_count(const struct PfSystem *sys);

// Checks every annotated function; writes the JSON report to `*out`.
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum PfStatus pf_check_json(const struct PfSystem *sys, char **out);

// Infers the least types; writes the solution or the unsat report to `*out`.
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum PfStatus pf_infer_json(const struct PfSystem *sys, char **out);

// Tests noninterference of every function over inputs in `lo..=hi`.
// `observer` names a single observer level, or is null for all levels.
//
// # Safety
// `sys` must be a live handle, `observer` null or a valid string, and `out` writable.
enum PfStatus pf_nitest_json(const struct PfSystem *sys,
                             const char *observer,
                             int64_t lo,
                             int64_t hi,
                             char **out);

// Runs `entry` (`App.fun`) on `nargs` arguments as if called by an app holding
// `caller_perms` (comma separated, null for none). The result goes to `*result`.
//
// # Safety
// `sys` must be a live handle, `entry` a valid string, `args` readable for
// `nargs` values (or null when `nargs` is 0), `caller_perms` null or a valid
// string, and `result` writable.
enum PfStatus pf_run(const struct PfSystem *sys,
                     const char *entry,
                     const int64_t *args,
                     size_t nargs,
                     const char *caller_perms,
                     uint64_t fuel,
                     int64_t *result);

// Pretty-prints the system in canonical form.
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum PfStatus pf_fmt(const struct PfSystem *sys, char **out);

// Frees a string returned through an `out` parameter. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void pf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERMFLOW_H */
