#include <stdio.h>
#include <string.h>
#include "lppm.h"

#define CHECK(call) do { LppmStatus s = (call); if (s != LPPM_STATUS_OK) { \
    fprintf(stderr, "%s failed: %d %s\n", #call, (int)s, lppm_last_error_message()); return 1; } } while (0)

int main(void) {
    LppmTrace *tr = lppm_trace_new("c-user");
    if (!tr) return 1;
    for (int i = 0; i < 20; i++)
        CHECK(lppm_trace_push(tr, 1000 + 300 * i, 45.76 + 1e-5 * (i % 3), 4.84));

    LppmTrace *noisy = NULL;
    CHECK(lppm_obfuscate_planar_laplace(tr, 0.01, 7, &noisy));
    double err = 0.0;
    CHECK(lppm_average_error(tr, noisy, &err));

    LppmPoiList *pois = NULL;
    CHECK(lppm_extract_pois(tr, 250.0, 3600, &pois));
    LppmPoi p;
    CHECK(lppm_poi_list_get(pois, 0, &p));

    if (lppm_trace_push(tr, 0, 0.0, 0.0) != LPPM_STATUS_INVALID_ARGUMENT || !lppm_last_error_message())
        return 2;

    printf("version=%s points=%zu error=%.1f pois=%zu dwell=%lld\n", lppm_version(), lppm_trace_len(noisy), err,
           lppm_poi_list_len(pois), (long long)(p.t_end - p.t_start));
    lppm_poi_list_free(pois);
    lppm_trace_free(noisy);
    lppm_trace_free(tr);
    return 0;
}
