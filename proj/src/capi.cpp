#include "cochstream/cochstream.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>

#include "audio/wav.hpp"
#include "dsp/frontend.hpp"
#include "inversion/invert.hpp"
#include "lm/train.hpp"
#include "pipeline/commands.hpp"
#include "util/checkpoint.hpp"
#include "wavcoch/train.hpp"

namespace {

thread_local std::string g_last_error;

template <typename F>
coch_status wrap(F&& f) {
    try {
        f();
        return COCH_OK;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return COCH_ERR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return COCH_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return COCH_ERR_INTERNAL;
    }
}

coch_status fail_invalid(const char* msg) {
    g_last_error = msg;
    return COCH_ERR_INVALID_ARGUMENT;
}

template <typename T>
T* copy_out(const std::vector<T>& v) {
    T* p = static_cast<T*>(std::malloc(v.size() * sizeof(T)));
    if (!p) throw std::runtime_error("out of memory");
    std::memcpy(p, v.data(), v.size() * sizeof(T));
    return p;
}

coch::audio::Waveform make_waveform(const float* samples, int64_t n, int sample_rate) {
    if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
    coch::audio::Waveform w;
    w.sample_rate = sample_rate;
    w.samples.assign(samples, samples + n);
    if (sample_rate != coch::dsp::kSampleRate) w = coch::audio::resample(w, coch::dsp::kSampleRate);
    return w;
}

void export_spectrogram(const coch::dsp::Spectrogram& s, float** data_out, int32_t* rows_out,
                        int32_t* cols_out) {
    *data_out = copy_out(s.v);
    *rows_out = s.rows;
    *cols_out = s.cols;
}

}  // namespace

extern "C" {

struct coch_wavcoch {
    coch::wavcoch::WavCochModel m;
};
struct coch_lm {
    coch::lm::LmModel m;
};

const char* coch_version(void) { return "0.1.0"; }

const char* coch_last_error(void) { return g_last_error.c_str(); }

void coch_free(void* p) { std::free(p); }

void coch_string_free(char* s) { std::free(s); }

coch_status coch_wavcoch_open(const char* ckpt_path, coch_wavcoch** out) {
    if (!ckpt_path || !out) return fail_invalid("ckpt_path and out must be non-null");
    return wrap([&] {
        auto* h = new coch_wavcoch{coch::wavcoch::wavcoch_from_checkpoint(coch::load_checkpoint(ckpt_path))};
        *out = h;
    });
}

void coch_wavcoch_close(coch_wavcoch* m) { delete m; }

int coch_wavcoch_bits(const coch_wavcoch* m) { return m ? m->m.cfg.bit_width : 0; }

coch_status coch_lm_open(const char* ckpt_path, coch_lm** out) {
    if (!ckpt_path || !out) return fail_invalid("ckpt_path and out must be non-null");
    return wrap([&] {
        auto* h = new coch_lm{coch::lm::lm_from_checkpoint(coch::load_checkpoint(ckpt_path))};
        *out = h;
    });
}

void coch_lm_close(coch_lm* m) { delete m; }

int coch_lm_context(const coch_lm* m) { return m ? m->m.cfg.context_len : 0; }

int coch_lm_vocab(const coch_lm* m) { return m ? m->m.cfg.vocab : 0; }

coch_status coch_cochleagram(const float* samples, int64_t n_samples, int sample_rate,
                             int use_mel, float** data_out, int32_t* rows_out,
                             int32_t* cols_out) {
    if (!samples || !data_out || !rows_out || !cols_out)
        return fail_invalid("samples and output pointers must be non-null");
    return wrap([&] {
        coch::audio::Waveform w = make_waveform(samples, n_samples, sample_rate);
        coch::dsp::Spectrogram s = use_mel ? coch::dsp::mel_spectrogram(w) : coch::dsp::cochleagram(w);
        export_spectrogram(s, data_out, rows_out, cols_out);
    });
}

coch_status coch_tokenize(const coch_wavcoch* m, const float* samples, int64_t n_samples,
                          int sample_rate, uint16_t** ids_out, int64_t* n_ids_out) {
    if (!m || !samples || !ids_out || !n_ids_out)
        return fail_invalid("model, samples, and output pointers must be non-null");
    return wrap([&] {
        coch::wavcoch::TokenStream t =
            coch::wavcoch::tokenize(m->m, make_waveform(samples, n_samples, sample_rate));
        *ids_out = copy_out(t.ids);
        *n_ids_out = static_cast<int64_t>(t.ids.size());
    });
}

coch_status coch_detokenize(const coch_wavcoch* m, const uint16_t* ids, int64_t n_ids,
                            float** data_out, int32_t* rows_out, int32_t* cols_out) {
    if (!m || !ids || !data_out || !rows_out || !cols_out)
        return fail_invalid("model, ids, and output pointers must be non-null");
    return wrap([&] {
        coch::wavcoch::TokenStream t;
        t.ids.assign(ids, ids + n_ids);
        t.bit_width = m->m.cfg.bit_width;
        coch::dsp::Spectrogram s = coch::wavcoch::detokenize(m->m, t);
        export_spectrogram(s, data_out, rows_out, cols_out);
    });
}

coch_status coch_generate(const coch_lm* m, const uint16_t* prompt, int64_t n_prompt,
                          int64_t n_new, double temperature, int top_k, uint64_t seed,
                          uint16_t** ids_out, int64_t* n_ids_out) {
    if (!m || !prompt || !ids_out || !n_ids_out)
        return fail_invalid("model, prompt, and output pointers must be non-null");
    return wrap([&] {
        std::vector<uint16_t> p(prompt, prompt + n_prompt);
        std::vector<uint16_t> ids =
            coch::lm::generate(m->m, p, static_cast<int>(n_new), temperature, top_k, seed);
        *ids_out = copy_out(ids);
        *n_ids_out = static_cast<int64_t>(ids.size());
    });
}

coch_status coch_invert(const float* target, int32_t rows, int32_t cols, int64_t steps,
                        double lr, uint64_t seed, float** wav_out, int64_t* n_samples_out,
                        double* final_loss_out) {
    if (!target || !wav_out || !n_samples_out)
        return fail_invalid("target and output pointers must be non-null");
    return wrap([&] {
        coch::dsp::Spectrogram s;
        s.rows = rows;
        s.cols = cols;
        if (rows <= 0 || cols <= 0) throw std::invalid_argument("rows and cols must be positive");
        s.v.assign(target, target + static_cast<size_t>(rows) * cols);
        coch::inversion::InversionConfig ic;
        ic.steps = steps;
        ic.lr = lr;
        ic.seed = seed;
        if (rows == coch::dsp::kErbChannels)
            ic.target = coch::dsp::TargetKind::Cochleagram;
        else if (rows == coch::dsp::kMelChannels)
            ic.target = coch::dsp::TargetKind::Mel;
        else
            throw std::invalid_argument("rows must be 211 (cochleagram) or 80 (mel)");
        coch::inversion::InversionResult res = coch::inversion::invert_cochleagram(s, ic);
        *wav_out = copy_out(res.wav.samples);
        *n_samples_out = static_cast<int64_t>(res.wav.samples.size());
        if (final_loss_out) *final_loss_out = res.final_loss();
    });
}

coch_status coch_run_command(const char* command, const char* config_json,
                             char** report_json_out) {
    if (!command || !config_json || !report_json_out)
        return fail_invalid("command, config_json, and report_json_out must be non-null");
    return wrap([&] {
        nlohmann::json cfg = nlohmann::json::parse(config_json, nullptr, false);
        if (cfg.is_discarded()) throw std::invalid_argument("config_json is not valid JSON");
        nlohmann::json rep = coch::pipeline::run_command(command, cfg);
        std::string text = rep.dump(2);
        char* out = static_cast<char*>(std::malloc(text.size() + 1));
        if (!out) throw std::runtime_error("out of memory");
        std::memcpy(out, text.c_str(), text.size() + 1);
        *report_json_out = out;
    });
}

}  // extern "C"
