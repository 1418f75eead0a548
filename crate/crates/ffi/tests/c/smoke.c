#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dr_splitting.h"

#define CHECK(call)                                                    \
    do {                                                               \
        DrStatus st_ = (call);                                         \
        if (st_ != DR_STATUS_OK) {                                     \
            char msg_[256];                                            \
            dr_last_error(msg_, sizeof msg_);                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_, msg_);  \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(void) {
    DrProblem *p = NULL;
    CHECK(dr_problem_tiny_qp(&p));

    size_t nx, ny, blocks;
    CHECK(dr_problem_dims(p, &nx, &ny, &blocks));
    if (nx != 3 || blocks != 2) {
        fprintf(stderr, "dims %zu %zu %zu\n", nx, ny, blocks);
        return 1;
    }

    double xs[16], ys[16], pstar;
    CHECK(dr_problem_reference(p, DR_REF_METHOD_ORACLE, 1.0, 1.0, 0, 0.0, xs, 16, ys, 16, &pstar));

    DrSolverOptions o = dr_solver_options_default(DR_ALGORITHM_RPDR);
    DrSolver *s = NULL;
    CHECK(dr_solver_new(p, &o, &s));
    CHECK(dr_solver_run_epochs(s, 2000));

    double x[16], y[16], val;
    CHECK(dr_solver_solution(s, x, 16, y, 16));
    CHECK(dr_problem_primal_value(p, x, nx, &val));
    printf("version %s iterations %llu primal %.12f reference %.12f\n", dr_version(),
           (unsigned long long)dr_solver_iterations(s), val, pstar);
    if (fabs(val - pstar) > 1e-6) return 1;

    if (dr_solver_solution(s, x, 1, y, 16) != DR_STATUS_BUFFER_TOO_SMALL) return 1;
    if (dr_problem_dims(NULL, &nx, &ny, &blocks) != DR_STATUS_NULL_POINTER) return 1;

    dr_solver_free(s);
    dr_problem_free(p);
    return 0;
}
