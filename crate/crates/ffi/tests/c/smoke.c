#include <math.h>
#include <stdio.h>
#include "radau_guidance.h"

int main(void) {
    double nodes[3], weights[3], diff[12];
    if (rg_lgr_basis(3, nodes, 3, weights, 3, diff, 12) != RG_STATUS_OK) return 1;
    double sum = weights[0] + weights[1] + weights[2];
    if (fabs(sum - 2.0) > 1e-14 || nodes[0] != -1.0) return 2;

    RgProblem *p = NULL;
    if (rg_problem_new_example(2.0, 5.0, 0.01, 16, 6, 2.0, &p) != RG_STATUS_OK) return 3;
    RgTrajectory *t = NULL;
    if (rg_solve_reference(p, false, &t) != RG_STATUS_OK) return 4;
    double x[1];
    if (rg_trajectory_state_at(t, 50.0, x, 1) != RG_STATUS_OK) return 5;
    if (fabs(x[0] - 1.0) > 1e-8) return 6;
    if (rg_trajectory_state_at(t, 60.0, x, 1) != RG_STATUS_INVALID_ARGUMENT) return 7;
    char msg[256];
    if (rg_last_error_message(msg, sizeof msg, NULL) != RG_STATUS_OK) return 8;
    printf("%s\n", msg);
    rg_trajectory_free(t);
    rg_problem_free(p);
    return 0;
}
