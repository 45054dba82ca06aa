#ifndef COCHSTREAM_H
#define COCHSTREAM_H
/*
 * C interface to the cochlear token pipeline.
 *
 * Conventions:
 *   - Every fallible call returns coch_status; COCH_OK is 0.
 *   - On failure, coch_last_error() returns a thread-local message that
 *     stays valid until the next failing call on the same thread.
 *   - Buffers handed out through ** parameters are owned by the caller and
 *     released with coch_free (coch_string_free for report strings).
 *   - Audio buffers are mono float samples; any sample rate is accepted and
 *     resampled to the native 16 kHz internally.
 *   - Spectrograms are row-major [rows, cols]: one column per 5 ms frame,
 *     row 0 = lowest channel (211 rows for the cochleagram, 80 for mel).
 */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum coch_status {
    COCH_OK = 0,
    COCH_ERR_INVALID_ARGUMENT = 1, /* bad config, bad shape, unknown name */
    COCH_ERR_RUNTIME = 2,          /* I/O failures, malformed files */
    COCH_ERR_INTERNAL = 3          /* anything unexpected */
} coch_status;

const char* coch_version(void);
const char* coch_last_error(void);

void coch_free(void* p);
void coch_string_free(char* s);

/* ---- models (opaque handles loaded from checkpoint files) ---- */

typedef struct coch_wavcoch coch_wavcoch;
typedef struct coch_lm coch_lm;

coch_status coch_wavcoch_open(const char* ckpt_path, coch_wavcoch** out);
void coch_wavcoch_close(coch_wavcoch* m);
/* quantizer width in bits; vocabulary size is 1 << bits */
int coch_wavcoch_bits(const coch_wavcoch* m);

coch_status coch_lm_open(const char* ckpt_path, coch_lm** out);
void coch_lm_close(coch_lm* m);
int coch_lm_context(const coch_lm* m);
int coch_lm_vocab(const coch_lm* m);

/* ---- analysis without a model ---- */

/* use_mel 0 -> 211-row cochleagram, nonzero -> 80-row mel spectrogram */
coch_status coch_cochleagram(const float* samples, int64_t n_samples, int sample_rate,
                             int use_mel, float** data_out, int32_t* rows_out,
                             int32_t* cols_out);

/* ---- tokenizer ---- */

/* one token per 5 ms frame; ids lie in [0, 1 << bits) */
coch_status coch_tokenize(const coch_wavcoch* m, const float* samples, int64_t n_samples,
                          int sample_rate, uint16_t** ids_out, int64_t* n_ids_out);

/* decode token ids back to the training target space */
coch_status coch_detokenize(const coch_wavcoch* m, const uint16_t* ids, int64_t n_ids,
                            float** data_out, int32_t* rows_out, int32_t* cols_out);

/* ---- sequence model ---- */

/* returns prompt + n_new sampled ids; temperature 0 = argmax, top_k 0 = all */
coch_status coch_generate(const coch_lm* m, const uint16_t* prompt, int64_t n_prompt,
                          int64_t n_new, double temperature, int top_k, uint64_t seed,
                          uint16_t** ids_out, int64_t* n_ids_out);

/* ---- spectrogram-to-waveform inversion ---- */

/* gradient-descends a random waveform until its analysis matches the target;
 * rows picks the analysis (211 cochleagram / 80 mel); final_loss_out may be
 * NULL */
coch_status coch_invert(const float* target, int32_t rows, int32_t cols, int64_t steps,
                        double lr, uint64_t seed, float** wav_out, int64_t* n_samples_out,
                        double* final_loss_out);

/* ---- command runner ---- */

/* Runs one named pipeline command ("tokenize", "wavcoch-train", "probe",
 * "ablate-vocab", ...) with a JSON config string and returns the JSON report.
 * The report embeds the resolved config, seed, and input hashes; release it
 * with coch_string_free. */
coch_status coch_run_command(const char* command, const char* config_json,
                             char** report_json_out);

#ifdef __cplusplus
}
#endif
#endif /* COCHSTREAM_H */
