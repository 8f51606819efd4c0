#ifndef GFINN_GFINN_H
#define GFINN_GFINN_H

/* C interface to the experiment runner. Functions return a gfinn_status;
   on failure gfinn_last_error() describes the problem (thread-local, valid
   until the next call on the same thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GFINN_API __declspec(dllexport)
#else
#define GFINN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  GFINN_OK = 0,
  GFINN_ERR_INTERNAL = 1,
  GFINN_ERR_CONFIG = 2,
  GFINN_ERR_NUMERICAL = 3,
  GFINN_ERR_IO = 4
} gfinn_status;

typedef struct gfinn_config gfinn_config;

typedef void (*gfinn_progress_fn)(const char* line, void* user);

GFINN_API const char* gfinn_version(void);
GFINN_API const char* gfinn_last_error(void);

/* Loads a JSON config (path may be NULL for the defaults). scale may be NULL;
   seed is applied when has_seed is nonzero; threads <= 0 keeps the config value. */
GFINN_API gfinn_status gfinn_config_load(const char* path, const char* scale, int has_seed, uint64_t seed,
                                         int threads, gfinn_config** out);
GFINN_API void gfinn_config_free(gfinn_config* cfg);

/* Copies a NUL-terminated string into buf; GFINN_ERR_CONFIG when it does not fit. */
GFINN_API gfinn_status gfinn_config_hash(const gfinn_config* cfg, char* buf, size_t size);
GFINN_API gfinn_status gfinn_config_json(const gfinn_config* cfg, char* buf, size_t size, size_t* needed);

/* command: "generate", "train", "eval", "export" or "verify". The summary
   line is copied into summary (may be NULL). */
GFINN_API gfinn_status gfinn_run(const gfinn_config* cfg, const char* command, const char* out_dir, int overwrite,
                                 gfinn_progress_fn progress, void* user, char* summary, size_t summary_size);

#ifdef __cplusplus
}
#endif

#endif
