/* Minimal runtime for code emitted by owlc.
 *
 * owl_alloc/owl_free wrap malloc/free and keep a count of live blocks so
 * a native run can be audited for leaks. Define OWL_RUNTIME_IMPL in exactly
 * one translation unit. Emitted code includes no libc headers, so extern
 * functions may reuse libc names such as rand; keep OWL_RUNTIME_IMPL out
 * of translation units that define such functions.
 */
#ifndef OWL_RUNTIME_H
#define OWL_RUNTIME_H

#include <stddef.h>
#include <stdint.h>

/* Exit status when the allocator fails. */
#define OWL_EXIT_OOM 70

extern long owl_live_blocks;

void *owl_alloc(size_t size);
void owl_free(void *p);
/* Division by zero and falling off a non-unit function end here. */
void owl_abort(void);
void owl_zero(void *p, size_t n);

#ifdef OWL_RUNTIME_IMPL
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

long owl_live_blocks = 0;

void *owl_alloc(size_t size) {
    void *p = malloc(size == 0 ? 1 : size);
    if (p == NULL) {
        fputs("owl: out of memory\n", stderr);
        exit(OWL_EXIT_OOM);
    }
    owl_live_blocks++;
    return p;
}

void owl_free(void *p) {
    if (p != NULL) {
        owl_live_blocks--;
        free(p);
    }
}

void owl_abort(void) {
    abort();
}

void owl_zero(void *p, size_t n) {
    memset(p, 0, n);
}
#endif

#endif
