/* Fits a model on two separated clusters, predicts, and round-trips the model file. */
#include <stdio.h>
#include <math.h>
#include "npn.h"

#define N 40

int main(int argc, char **argv) {
    const char *path = argc > 1 ? argv[1] : "smoke-model.json";
    double x[2 * N];
    uint8_t labels[N], truth[N], pred[N];
    double prob[N];
    for (int i = 0; i < N; i++) {
        int cls = i >= N / 2;
        double shift = cls ? 3.0 : -3.0;
        x[2 * i] = shift + sin(i * 1.7);
        x[2 * i + 1] = shift + cos(i * 2.3);
        truth[i] = (uint8_t)cls;
        labels[i] = i % 4 == 0 ? (uint8_t)cls : NPN_MISSING_LABEL;
    }

    NpnFitOptions opts;
    npn_fit_options_default(&opts);
    opts.j_min = 8;
    opts.j_max = 9;
    opts.pilot_iterations = 60;
    opts.final_iterations = 200;

    NpnModel *model = NULL;
    if (npn_fit(x, N, 2, labels, &opts, &model) != NPN_STATUS_OK) {
        fprintf(stderr, "fit failed: %s\n", npn_last_error());
        return 1;
    }
    if (npn_model_predict(model, x, N, 2, pred, prob) != NPN_STATUS_OK) {
        fprintf(stderr, "predict failed: %s\n", npn_last_error());
        return 1;
    }
    int errors = 0;
    for (int i = 0; i < N; i++) errors += pred[i] != truth[i];

    NpnModel *loaded = NULL;
    if (npn_model_save(model, path) != NPN_STATUS_OK || npn_model_load(path, &loaded) != NPN_STATUS_OK) {
        fprintf(stderr, "save/load failed: %s\n", npn_last_error());
        return 1;
    }
    printf("npn %s: J = %zu, %zu features, %d training errors\n", npn_version(), npn_model_num_basis(loaded),
           npn_model_num_features(loaded), errors);

    NpnStatus st = npn_model_load("/nonexistent/model.json", &loaded);
    npn_model_free(model);
    npn_model_free(loaded);
    return st == NPN_STATUS_IO && errors == 0 ? 0 : 1;
}
