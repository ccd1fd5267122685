#include <stdio.h>
#include <stdlib.h>

#include "nnse.h"

/* Loads the model in argv[1], runs it on an all-zero input and attacks
 * position 0 over [argv[2], argv[3]]. Prints "label <l> outcome <o>". */
int main(int argc, char **argv) {
    if (argc != 4) {
        return 64;
    }
    NnseModel *m = NULL;
    if (nnse_model_load(argv[1], &m) != NNSE_STATUS_OK) {
        fprintf(stderr, "%s\n", nnse_last_error());
        return 1;
    }
    size_t n = nnse_model_input_len(m);
    size_t k = nnse_model_num_classes(m);
    double *x = calloc(n, sizeof(double));
    double *adv = calloc(n, sizeof(double));
    double *logits = calloc(k, sizeof(double));
    size_t label = 0, new_label = 0, pos = 0;
    NnseAttackOutcome outcome;
    if (nnse_forward(m, x, n, logits, k, &label) != NNSE_STATUS_OK ||
        nnse_attack_pixel(m, x, n, &pos, 1, atof(argv[2]), atof(argv[3]), 10.0, &outcome, adv,
                          &new_label) != NNSE_STATUS_OK) {
        fprintf(stderr, "%s\n", nnse_last_error());
        return 1;
    }
    printf("label %zu outcome %d\n", label, (int)outcome);
    if (nnse_model_load("/nonexistent", &m) != NNSE_STATUS_MISSING_FILE) {
        return 2;
    }
    nnse_model_free(m);
    free(x);
    free(adv);
    free(logits);
    return 0;
}
