#include <math.h>
#include <stdio.h>
#include "dpfl.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            const char *e = dpfl_last_error();                        \
            fprintf(stderr, "check failed at line %d: %s (%s)\n",     \
                    __LINE__, #cond, e ? e : "no error");             \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    printf("dpfl %s\n", dpfl_version());

    double f2 = 0.0;
    CHECK(dpfl_privacy_f2(100, 0.5, 0.25, &f2) == DPFL_STATUS_OK);
    CHECK(fabs(f2 - 10.0) < 1e-12);

    double sigma = 0.0;
    CHECK(dpfl_design_sigma(0.5, 20, 25.0, 40, &sigma) == DPFL_STATUS_OK);
    double residual = 1.0;
    CHECK(dpfl_manifold_residual(40, sigma, 0.5, 25.0, 20, &residual) == DPFL_STATUS_OK);
    CHECK(fabs(residual) < 1e-9);

    CHECK(dpfl_privacy_f2(1, 1.0, 2.0, &f2) == DPFL_STATUS_INVALID_ARGUMENT);
    CHECK(dpfl_last_error() != NULL);
    CHECK(dpfl_privacy_f2(1, 1.0, 1.0, NULL) == DPFL_STATUS_NULL_POINTER);

    DpflObjective pts[3] = {
        {1.0, 3.0, 1, 0.1, 1.0},
        {2.0, 2.0, 2, 0.1, 1.0},
        {3.0, 4.0, 3, 0.1, 1.0},
    };
    DpflParetoSet *set = NULL;
    CHECK(dpfl_pareto_sort(pts, 3, &set) == DPFL_STATUS_OK);
    CHECK(dpfl_pareto_len(set) == 2);
    DpflObjective m;
    CHECK(dpfl_pareto_get(set, 1, &m) == DPFL_STATUS_OK && m.rounds == 2);
    CHECK(dpfl_pareto_get(set, 2, &m) == DPFL_STATUS_OUT_OF_RANGE);
    dpfl_pareto_free(set);

    DpflSolution *sol = NULL;
    CHECK(dpfl_solution_new(1.0, 10, 25.0, 0.1, 100, &sol) == DPFL_STATUS_OK);
    DpflCase c;
    CHECK(dpfl_solution_case(sol, &c) == DPFL_STATUS_OK && c == DPFL_CASE_WIDE_SIGMA);
    CHECK(dpfl_solution_segment_count(sol) == 3);
    DpflSegment seg;
    CHECK(dpfl_solution_segment(sol, 0, &seg) == DPFL_STATUS_OK);
    CHECK(seg.rule == DPFL_RULE_FIXED && seg.t_start == 1 && seg.t_end == 39);
    dpfl_solution_free(sol);
    dpfl_solution_free(NULL);

    puts("ok");
    return 0;
}
