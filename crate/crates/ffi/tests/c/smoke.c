#include <stdio.h>
#include "drocox.h"

int main(void) {
    double pi[2] = {0.8, 0.2};
    double coef[4] = {1.0, 0.0, 0.0, 1.0};
    DrocoxDataset *ds = NULL;
    DrocoxModel *model = NULL;
    double scores[200], y[200], c = 0.0;
    unsigned char e[200];

    if (drocox_dataset_synthetic(200, 2, pi, coef, 2, 0.5, 3, &ds) != DROCOX_STATUS_OK) return 10;
    if (drocox_train(ds, NULL, "{\"trainer\": \"dro\", \"alpha\": 0.3, \"max_iterations\": 20}", &model) != DROCOX_STATUS_OK) return 11;
    if (drocox_model_risk_scores(model, ds, scores, 200) != DROCOX_STATUS_OK) return 12;
    if (drocox_dataset_outcomes(ds, y, e, 200) != DROCOX_STATUS_OK) return 13;
    if (drocox_c_index(scores, y, e, 200, &c) != DROCOX_STATUS_OK) return 14;
    if (drocox_train(NULL, NULL, NULL, &model) != DROCOX_STATUS_NULL_POINTER) return 15;
    if (drocox_last_error(NULL, 0) == 0) return 16;
    printf("%.6f\n", c);
    drocox_model_free(model);
    drocox_dataset_free(ds);
    return 0;
}
