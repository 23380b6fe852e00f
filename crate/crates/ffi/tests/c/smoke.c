#include <stdio.h>
#include <string.h>

#include "qsync.h"

int main(void) {
    QsyncSimulation *sim = NULL;
    if (qsync_simulation_from_scenario("two_identical", 3, &sim) != QSYNC_STATUS_OK) {
        fprintf(stderr, "create: %s\n", qsync_last_error_message());
        return 1;
    }
    if (qsync_simulation_step(sim, 5) != QSYNC_STATUS_OK) {
        return 2;
    }
    QsyncSummary s;
    if (qsync_simulation_summary(sim, &s) != QSYNC_STATUS_OK || s.time < 0.004) {
        return 3;
    }
    size_t need = 0;
    if (qsync_simulation_checkpoint(sim, NULL, 0, &need) != QSYNC_STATUS_BUFFER_TOO_SMALL || need == 0) {
        return 4;
    }
    qsync_simulation_free(sim);

    QsyncSimulation *bad = NULL;
    if (qsync_simulation_from_scenario("nope", 0, &bad) != QSYNC_STATUS_CONFIG || bad != NULL) {
        return 5;
    }
    if (strstr(qsync_last_error_message(), "nope") == NULL) {
        return 6;
    }
    printf("ok %zu\n", need);
    return 0;
}
