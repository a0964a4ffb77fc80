/* C interface to the fvstack library: trajectory-descriptor ingestion,
 * Fisher-Vector encoding, and hybrid classifier training/evaluation.
 * All functions return fvs_status; on failure fvs_last_error() describes
 * what went wrong for the calling thread. Handles are opaque and freed
 * with their matching *_free function. */

#ifndef FVSTACK_H
#define FVSTACK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FVS_API __declspec(dllexport)
#elif defined(__GNUC__)
#define FVS_API __attribute__((visibility("default")))
#else
#define FVS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    FVS_OK = 0,
    FVS_ERR_CONFIG = 2,
    FVS_ERR_DATA = 3,
    FVS_ERR_NUMERIC = 4
} fvs_status;

typedef enum {
    FVS_PROTO_MACC = 0,
    FVS_PROTO_MAP = 1,
    FVS_PROTO_MAP_POSITIVES = 2
} fvs_protocol;

/* transfer stage mask */
#define FVS_TRANSFER_GMM 1u
#define FVS_TRANSFER_REDUCTION 2u
#define FVS_TRANSFER_SUPERVISED 4u

typedef struct fvs_config_s fvs_config;
typedef struct fvs_container_s fvs_container;

FVS_API const char* fvs_last_error(void);
FVS_API void fvs_string_free(char* s);

/* configuration */
FVS_API fvs_status fvs_config_default(fvs_config** out);
FVS_API fvs_status fvs_config_load(const char* path, fvs_config** out);
FVS_API fvs_status fvs_config_set(fvs_config* cfg, const char* key, const char* value);
FVS_API void fvs_config_free(fvs_config* cfg);

/* synthetic descriptor generation; writes one FVD1 file per video into
 * out_dir and returns the number of files written */
FVS_API fvs_status fvs_synth(const fvs_config* cfg, const char* out_dir, uint64_t seed,
                             size_t* files_written);

/* unsupervised stage: rootsift -> per-channel PCA -> STA -> GMM */
FVS_API fvs_status fvs_fit_unsupervised(const fvs_config* cfg,
                                        const char* const* descriptor_paths, size_t n,
                                        fvs_container** out);

FVS_API fvs_status fvs_container_load(const char* path, fvs_container** out);
FVS_API fvs_status fvs_container_save(const fvs_container* c, const char* path);
FVS_API void fvs_container_free(fvs_container* c);

/* encodes each descriptor file into an FVR1 cache file in out_dir */
FVS_API fvs_status fvs_encode(const fvs_container* c, const char* const* descriptor_paths,
                              size_t n, const char* out_dir, int use_dafs);

/* classifier training on cached FVR1 representations */
FVS_API fvs_status fvs_train(fvs_container* c, const fvs_config* cfg,
                             const char* const* rep_paths, size_t n);
FVS_API fvs_status fvs_bag(fvs_container* c, const fvs_config* cfg,
                           const char* const* rep_paths, size_t n, int count);

FVS_API fvs_status fvs_transfer(const fvs_container* source, const fvs_config* cfg,
                                const char* const* target_descriptor_paths, size_t n,
                                unsigned stage_mask, fvs_container** out);

/* text and CSV reports are heap strings released with fvs_string_free;
 * either out pointer may be NULL. plot_dir, when non-NULL, receives one
 * precision-recall SVG per class. */
FVS_API fvs_status fvs_eval(const fvs_container* c, const char* const* rep_paths, size_t n,
                            fvs_protocol protocol, int negative_class, const char* plot_dir,
                            char** text_out, char** csv_out);

FVS_API fvs_status fvs_sweep(const fvs_config* cfg, const char* const* rep_paths, size_t n,
                             char** csv_out);

#ifdef __cplusplus
}
#endif

#endif /* FVSTACK_H */
