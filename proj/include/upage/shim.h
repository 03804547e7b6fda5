#ifndef UPAGE_SHIM_H
#define UPAGE_SHIM_H

/* C-convention entry points for preloading the paging engine under an
 * application. All functions except upage_alloc_managed and
 * upage_last_error return 0 on success and -1 on failure; the failure
 * message is kept per thread and readable via upage_last_error.
 *
 * Environment:
 *   UPAGE_MODE    scheme when upage_init is passed NULL
 *                 (mirror | device | advise | passthrough)
 *   UPAGE_MODEL   path to a key = value device model file
 *   UPAGE_TRACE   path that receives the JSONL event trace at shutdown
 *   UPAGE_KERNELS compute backend selection (scalar | avx2 | auto)
 *
 * Kernel launches arriving through this interface have no simulated body
 * bound, so the launch moves data and advances the modeled clock but
 * executes nothing; callers that want executed kernels use the C++ API.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

int upage_init(const char* scheme);

void* upage_alloc_managed(uint64_t len);
int upage_free(void* ptr);

int upage_register_code_object(const void* image, size_t len);
int upage_register_function(const void* handle, const char* name);
int upage_launch_kernel(const void* handle, const void* args, size_t args_len,
                        uint64_t items);

int upage_note_host_read(const void* ptr, uint64_t len);
int upage_note_host_write(const void* ptr, uint64_t len);

int upage_shutdown(void);

const char* upage_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* UPAGE_SHIM_H */
