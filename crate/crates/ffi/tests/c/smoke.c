#include <math.h>
#include <stdio.h>
#include <string.h>

#include "altrec.h"

#define CHECK(cond)                                                    \
    do {                                                               \
        if (!(cond)) {                                                 \
            const char *e = altrec_last_error();                       \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,    \
                    #cond, e ? e : "no error");                        \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke STORE ANCHOR\n");
        return 2;
    }
    AltrecStore *store = NULL;
    CHECK(altrec_store_load(argv[1], &store) == ALTREC_STATUS_OK);
    size_t dim = altrec_store_dim(store);

    AltrecIndex *index = NULL;
    CHECK(altrec_index_build(store, 16, 200, 100, 7, &index) == ALTREC_STATUS_OK);

    AltrecResults *recs = NULL;
    CHECK(altrec_recommend(index, store, argv[2], 10, 0.8, 100, &recs) == ALTREC_STATUS_OK);
    for (size_t i = 0; i < altrec_results_len(recs); i++) {
        printf("%s,%s,%zu,%.17g\n", argv[2], altrec_results_id(recs, i), i + 1,
               altrec_results_similarity(recs, i));
    }
    altrec_results_free(recs);

    double q[64];
    CHECK(dim <= 64);
    CHECK(altrec_store_get(store, argv[2], q, dim) == ALTREC_STATUS_OK);
    double self = 0.0;
    CHECK(altrec_cosine_energy(q, q, dim, &self) == ALTREC_STATUS_OK);
    CHECK(fabs(self - 1.0) < 1e-12);

    CHECK(altrec_recommend(index, store, "missing", 10, 0.8, 100, &recs) ==
          ALTREC_STATUS_UNKNOWN_PRODUCT);
    CHECK(recs == NULL);
    CHECK(strstr(altrec_last_error(), "missing") != NULL);

    double loss = -1.0;
    CHECK(altrec_contrastive_loss(0.25, 1, &loss) == ALTREC_STATUS_OK && loss == 0.75);

    altrec_index_free(index);
    altrec_store_free(store);
    return 0;
}
