// Data-shuffling commands: corpus synthesis, spectrogram extraction,
// tokenize/detokenize round trips, and waveform inversion.

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "audio/wav.hpp"
#include "dsp/frontend.hpp"
#include "inversion/invert.hpp"
#include "pipeline/commands.hpp"
#include "pipeline/report.hpp"
#include "synth/corpus.hpp"
#include "util/hash.hpp"
#include "wavcoch/ctok.hpp"
#include "wavcoch/model.hpp"
#include "wavcoch/train.hpp"

namespace fs = std::filesystem;

namespace coch::pipeline {

namespace {

audio::Waveform load_wav_16k(const std::string& path) {
    audio::Waveform w = audio::load_wav(path);
    if (w.sample_rate != dsp::kSampleRate) w = audio::resample(w, dsp::kSampleRate);
    return w;
}

wavcoch::WavCochModel load_wavcoch(const std::string& ckpt_path) {
    return wavcoch::wavcoch_from_checkpoint(load_checkpoint(ckpt_path));
}

void ensure_parent_dir(const std::string& path) {
    fs::path p = fs::path(path).parent_path();
    if (!p.empty()) fs::create_directories(p);
}

}  // namespace

json cmd_synth_corpus(const json& raw) {
    Config cfg(raw);
    synth::SynthCorpusConfig sc;
    sc.out_dir = cfg.require_str("out_dir");
    sc.n_train = static_cast<int>(cfg.integer("n_train", sc.n_train));
    sc.n_dev = static_cast<int>(cfg.integer("n_dev", sc.n_dev));
    sc.n_test = static_cast<int>(cfg.integer("n_test", sc.n_test));
    sc.clip_seconds = cfg.number("clip_seconds", sc.clip_seconds);
    sc.seed = cfg.seed();
    cfg.finish();

    Report rep("synth-corpus", cfg);
    synth::SynthCorpusPaths out = synth::generate_corpus(sc);
    rep.output("manifest", out.manifest_csv);
    rep.output("word_pairs", out.word_pairs_csv);
    rep.metric("n_utterances", out.n_utterances);
    return rep.done();
}

json cmd_cochgram(const json& raw) {
    Config cfg(raw);
    const std::string in = cfg.require_str("in");
    const std::string out = cfg.require_str("out");
    const std::string kind = cfg.str("kind", "cochleagram");
    const std::string pgm = cfg.str("pgm", "");
    cfg.finish();
    if (kind != "cochleagram" && kind != "mel")
        throw std::invalid_argument("kind must be cochleagram or mel, got " + kind);

    Report rep("cochgram", cfg);
    rep.input(in);
    audio::Waveform w = load_wav_16k(in);
    dsp::Spectrogram s = kind == "mel" ? dsp::mel_spectrogram(w) : dsp::cochleagram(w);
    ensure_parent_dir(out);
    dsp::save_cgrm(out, s);
    rep.output("cgrm", out);
    if (!pgm.empty()) {
        ensure_parent_dir(pgm);
        dsp::save_pgm(pgm, s);
        rep.output("pgm", pgm);
    }
    rep.metric("rows", s.rows);
    rep.metric("frames", s.cols);
    rep.metric("input_seconds", w.seconds());
    return rep.done();
}

json cmd_tokenize(const json& raw) {
    Config cfg(raw);
    const std::string ckpt = cfg.require_str("ckpt");
    const std::string in = cfg.require_str("in");
    const std::string out = cfg.require_str("out");
    cfg.finish();

    Report rep("tokenize", cfg);
    rep.input(ckpt);
    wavcoch::WavCochModel model = load_wavcoch(ckpt);

    std::vector<std::string> wavs;
    bool dir_mode = fs::is_directory(in);
    if (dir_mode)
        wavs = wavcoch::list_wavs(in);
    else
        wavs.push_back(in);

    long total_tokens = 0;
    json files = json::array();
    for (const std::string& path : wavs) {
        rep.input(path);
        wavcoch::TokenStream t = wavcoch::tokenize(model, load_wav_16k(path));
        std::string dst = out;
        if (dir_mode) {
            fs::create_directories(out);
            dst = (fs::path(out) / fs::path(path).stem()).string() + ".ctok";
        } else {
            ensure_parent_dir(dst);
        }
        wavcoch::save_ctok(dst, t);
        total_tokens += static_cast<long>(t.ids.size());
        files.push_back({{"in", path}, {"out", dst}, {"n_tokens", t.ids.size()}});
    }
    rep.output("ctok", out);
    rep.metric("files", files);
    rep.metric("n_files", wavs.size());
    rep.metric("n_tokens", total_tokens);
    rep.metric("bit_width", model.cfg.bit_width);
    rep.metric("frame_rate_hz", dsp::kFrameRate);
    return rep.done();
}

json cmd_detokenize(const json& raw) {
    Config cfg(raw);
    const std::string ckpt = cfg.require_str("ckpt");
    const std::string in = cfg.require_str("in");
    const std::string out = cfg.require_str("out");
    const std::string pgm = cfg.str("pgm", "");
    cfg.finish();

    Report rep("detokenize", cfg);
    rep.input(ckpt);
    rep.input(in);
    wavcoch::WavCochModel model = load_wavcoch(ckpt);
    wavcoch::TokenStream t = wavcoch::load_ctok(in);
    dsp::Spectrogram s = wavcoch::detokenize(model, t);
    ensure_parent_dir(out);
    dsp::save_cgrm(out, s);
    rep.output("cgrm", out);
    if (!pgm.empty()) {
        ensure_parent_dir(pgm);
        dsp::save_pgm(pgm, s);
        rep.output("pgm", pgm);
    }
    rep.metric("rows", s.rows);
    rep.metric("frames", s.cols);
    rep.metric("n_tokens", t.ids.size());
    return rep.done();
}

json cmd_invert(const json& raw) {
    Config cfg(raw);
    const std::string in = cfg.require_str("in");
    const std::string out = cfg.require_str("out");
    inversion::InversionConfig ic;
    ic.steps = cfg.integer("steps", ic.steps);
    ic.lr = cfg.number("lr", ic.lr);
    ic.seed = cfg.seed();
    ic.init_std = cfg.number("init_std", ic.init_std);
    ic.stop_loss = cfg.number("stop_loss", ic.stop_loss);
    std::string trace_path = cfg.str("trace", "");
    if (trace_path.empty()) trace_path = (fs::path(out).replace_extension(".loss.csv")).string();
    cfg.finish();

    Report rep("invert", cfg);
    rep.input(in);
    dsp::Spectrogram target = dsp::load_cgrm(in);
    if (target.rows == dsp::kErbChannels)
        ic.target = dsp::TargetKind::Cochleagram;
    else if (target.rows == dsp::kMelChannels)
        ic.target = dsp::TargetKind::Mel;
    else
        throw std::invalid_argument("cgrm has " + std::to_string(target.rows) +
                                    " rows; expected 211 (cochleagram) or 80 (mel)");

    inversion::InversionResult res = inversion::invert_cochleagram(target, ic);
    ensure_parent_dir(out);
    audio::save_wav(out, res.wav);
    rep.output("wav", out);

    ensure_parent_dir(trace_path);
    std::ofstream tf(trace_path);
    if (!tf) throw std::runtime_error("cannot write " + trace_path);
    tf << "step,loss\n";
    for (size_t k = 0; k < res.trace.size(); ++k) tf << k << "," << res.trace[k] << "\n";
    rep.output("trace", trace_path);

    rep.metric("target_kind", ic.target == dsp::TargetKind::Mel ? "mel" : "cochleagram");
    rep.metric("initial_loss", res.initial_loss());
    rep.metric("final_loss", res.final_loss());
    rep.metric("steps_run", res.trace.size() - 1);
    rep.metric("aborted", res.aborted);
    rep.metric("n_samples", res.wav.samples.size());
    return rep.done();
}

}  // namespace coch::pipeline
