/* Minimal round trip through the C interface.
 *
 *   cargo build -p geophoto-ffi
 *   gcc -std=c99 -Wall -Icrates/ffi/include crates/ffi/examples/basic.c \
 *       -Ltarget/debug -lgeophoto_ffi -o basic
 *   LD_LIBRARY_PATH=target/debug ./basic
 */
#include "geophoto.h"
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>

int main(void) {
    double d = gp_great_circle_km(40.7128, -74.0060, 51.5074, -0.1278);
    assert(fabs(d - 5570.0) < 5.0);

    uint64_t trips[9] = {10, 6, 4, 2, 5, 3, 1, 1, 8};
    double model[9], ratio[9];
    assert(gp_null_model(trips, 3, model, ratio) == GP_STATUS_OK);
    assert(fabs(model[1] - 5.0) < 1e-12);
    assert(fabs(ratio[1] - 1.2) < 1e-12);
    assert(isnan(model[0])); /* diagonal */

    uint64_t grid[16] = {9, 9, 0, 0, 0, 0, 0, 7, 5, 0, 0, 7, 5, 0, 0, 0};
    GpHotspots *h = NULL;
    assert(gp_hotspots_extract(grid, 4, 4, 2, &h) == GP_STATUS_OK);
    assert(gp_hotspots_len(h) == 2);
    assert(gp_hotspot_activity(h, 0) == 18);
    gp_hotspots_free(h);

    GpRegistry *reg = gp_registry_bundled();
    char id[64];
    assert(gp_registry_locate(reg, "new_york", 41.9, 12.49, id, sizeof id) == GP_STATUS_OK);
    assert(strcmp(id, "nyc") == 0);
    gp_registry_free(reg);

    printf("ok, version %s\n", gp_version());
    return 0;
}
