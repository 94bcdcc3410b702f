#include <stdio.h>
#include "emolabel.h"

int main(void) {
    const uint32_t counts[4] = {2, 0, 2, 1};
    double out[4];
    if (emo_encode(counts, 4, EMO_LABEL_KIND_ALPHA_SOFT, 0.75, out) != EMO_STATUS_OK) {
        return 1;
    }
    printf("%g %g %g %g\n", out[0], out[1], out[2], out[3]);

    EmoCorpus *corpus = NULL;
    EmoStatus s = emo_corpus_load(NULL, "N,H", &corpus);
    char *msg = emo_last_error_message();
    if (msg == NULL || corpus != NULL) {
        return 2;
    }
    emo_string_free(msg);
    printf("status %d\n", (int)s);
    return 0;
}
