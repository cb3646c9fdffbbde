#include <stdio.h>
#include "concept_goodness.h"

int main(void) {
    double out = 0.0;
    if (cg_glm_score(3, 1, true, &out) != CG_STATUS_OK || out != 1.0) return 1;
    const double factors[4] = {0.99505, 0.5, 1.0, 1.0};
    const uint32_t weights[4] = {22, 27, 31, 15};
    if (cg_goodness(factors, weights, &out) != CG_STATUS_OK) return 2;

    CgRatingMatrix *m = cg_rating_matrix_new();
    cg_rating_matrix_set(m, "a", "C1", CG_BUCKET_GOOD);
    cg_rating_matrix_set(m, "b", "C1", CG_BUCKET_GOOD);
    cg_rating_matrix_set(m, "a", "C2", CG_BUCKET_BAD);
    cg_rating_matrix_set(m, "b", "C2", CG_BUCKET_BAD);
    double alpha = 0.0;
    CgStatus s = cg_rating_matrix_alpha(m, CG_LEVEL_NOMINAL, &alpha);
    cg_rating_matrix_free(m);
    if (s != CG_STATUS_OK || alpha != 1.0) return 3;

    if (cg_map_rating(9, NULL) != CG_STATUS_INVALID_ARGUMENT) return 4;
    if (cg_last_error_message() == NULL) return 5;
    printf("%.6f\n", out);
    return 0;
}
