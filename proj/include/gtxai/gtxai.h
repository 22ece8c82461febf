// Copyright 2026 The gtxai Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef GTXAI_GTXAI_H_
#define GTXAI_GTXAI_H_

#include <stddef.h>
#include <stdint.h>

#if defined(GTXAI_BUILDING)
#define GTXAI_API __attribute__((visibility("default")))
#else
#define GTXAI_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gtx_status {
  GTX_OK = 0,
  GTX_ERR_CONFIG = 1,
  GTX_ERR_RUNTIME = 2
} gtx_status;

typedef struct gtx_config gtx_config;
typedef struct gtx_volume gtx_volume;
typedef struct gtx_network gtx_network;

GTXAI_API const char* gtx_version(void);

/* Message of the last failed call on this thread; empty after success. */
GTXAI_API const char* gtx_last_error(void);

/* Experiment configuration. */
GTXAI_API gtx_status gtx_config_default(gtx_config** out);
GTXAI_API gtx_status gtx_config_load(const char* path, gtx_config** out);
GTXAI_API gtx_status gtx_config_parse(const char* text, gtx_config** out);
GTXAI_API void gtx_config_free(gtx_config* cfg);
GTXAI_API gtx_status gtx_config_set_seeds(gtx_config* cfg, const uint64_t* seeds, size_t n);
/* Comma-separated lists. */
GTXAI_API gtx_status gtx_config_set_stages(gtx_config* cfg, const char* stages);
GTXAI_API gtx_status gtx_config_set_methods(gtx_config* cfg, const char* methods);
GTXAI_API gtx_status gtx_config_validate(const gtx_config* cfg);
/* Copies the TOML form into buf (NUL-terminated when it fits); *needed gets
   the full length including the terminator. */
GTXAI_API gtx_status gtx_config_to_toml(const gtx_config* cfg, char* buf, size_t cap, size_t* needed);

/* Runs one of generate, correct, train, explain, evaluate, report, render,
   pipeline for the run directory <out_root>/<run id>. */
GTXAI_API gtx_status gtx_run(const gtx_config* cfg, const char* command, const char* out_root);

/* Volumes. */
GTXAI_API gtx_status gtx_volume_create(size_t nx, size_t ny, size_t nz, double spacing_mm, const double* values,
                                       gtx_volume** out);
GTXAI_API gtx_status gtx_volume_read(const char* path, gtx_volume** out);
GTXAI_API gtx_status gtx_volume_write(const gtx_volume* v, const char* path);
GTXAI_API void gtx_volume_free(gtx_volume* v);
/* dims = {nx, ny, nz}. */
GTXAI_API gtx_status gtx_volume_dims(const gtx_volume* v, size_t dims[3]);
GTXAI_API gtx_status gtx_volume_copy_data(const gtx_volume* v, double* buf, size_t n);

/* Networks. */
GTXAI_API gtx_status gtx_network_load(const char* checkpoint, gtx_network** out);
GTXAI_API void gtx_network_free(gtx_network* net);
GTXAI_API gtx_status gtx_network_hash(const gtx_network* net, char buf[17]);
/* Scalar output on the network's raw scale. */
GTXAI_API gtx_status gtx_network_predict(const gtx_network* net, const gtx_volume* x, double* out);

/* Attribution map of output 0 for a method name such as "SmoothGrad",
   "GradCAM_block2" or "LRP_EpsilonPlus". */
GTXAI_API gtx_status gtx_explain(const gtx_network* net, const gtx_volume* x, const char* method, uint64_t seed,
                                 gtx_volume** out);

/* Writes <out_prefix>.png and <out_prefix>.pgm of one axial slice.
   mask_path may be NULL; slice < 0 picks a slice automatically. */
GTXAI_API gtx_status gtx_render(const char* heatmap_path, const char* mask_path, const char* out_prefix, long slice);

#ifdef __cplusplus
}
#endif

#endif  // GTXAI_GTXAI_H_
