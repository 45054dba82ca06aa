// Training and sampling commands. Model hyperparameters arrive as a nested
// "model" object applied on top of an optional "preset"; schedule and
// optimizer knobs are flat keys with desk-scale defaults.

#include <filesystem>
#include <stdexcept>

#include "eval/dataset.hpp"
#include "lm/train.hpp"
#include "pipeline/commands.hpp"
#include "pipeline/report.hpp"
#include "wavcoch/ctok.hpp"
#include "wavcoch/train.hpp"

namespace fs = std::filesystem;

namespace coch::pipeline {

namespace {

// "data" accepts a wav file, a directory of wavs, or a span-dataset manifest
// CSV (then "split" picks which utterances feed the run)
std::vector<std::string> resolve_wav_inputs(const std::string& data, const std::string& split) {
    if (fs::is_directory(data)) return wavcoch::list_wavs(data);
    if (data.size() > 4 && data.substr(data.size() - 4) == ".csv") {
        eval::LabeledSpanDataset ds = eval::load_span_dataset(data);
        std::vector<std::string> paths;
        for (const eval::Utterance* u : ds.split(split)) paths.push_back(u->wav_path);
        if (paths.empty()) throw std::invalid_argument("manifest split '" + split + "' is empty");
        return paths;
    }
    return {data};
}

template <typename Cfg>
Cfg merged_model_config(json base, const json& overrides, Cfg (*from_json)(const json&)) {
    base.update(overrides);
    return from_json(base);
}

}  // namespace

json cmd_wavcoch_train(const json& raw) {
    Config cfg(raw);
    wavcoch::WavCochTrainConfig tc;
    const std::string data = cfg.require_str("data");
    const std::string split = cfg.str("split", "train");
    tc.checkpoint_path = cfg.require_str("out");

    const std::string preset = cfg.str("preset", "");
    wavcoch::WavCochConfig base_model;
    if (preset == "tiny")
        base_model = wavcoch::WavCochConfig::tiny();
    else if (!preset.empty())
        throw std::invalid_argument("unknown tokenizer preset: " + preset);
    tc.model = merged_model_config(wavcoch::wavcoch_config_to_json(base_model),
                                   cfg.object("model"), wavcoch::wavcoch_config_from_json);

    tc.steps = cfg.integer("steps", tc.steps);
    tc.batch_clips = static_cast<int>(cfg.integer("batch_clips", tc.batch_clips));
    tc.clip_samples = static_cast<int>(cfg.integer("clip_samples", tc.clip_samples));
    tc.entropy_weight = cfg.number("entropy_weight", tc.entropy_weight);
    tc.seed = cfg.seed();
    tc.stop_loss = cfg.number("stop_loss", tc.stop_loss);
    tc.sched.peak_lr = cfg.number("peak_lr", 1e-3);
    tc.sched.floor_lr = cfg.number("floor_lr", 0.0);
    tc.sched.warmup_steps = cfg.integer("warmup_steps", std::min(100L, tc.steps / 10));
    tc.sched.total_steps = cfg.integer("total_steps", tc.steps);
    tc.adamw.weight_decay = cfg.number("weight_decay", tc.adamw.weight_decay);
    tc.log_path = cfg.str("log", "");
    tc.log_every = cfg.integer("log_every", tc.log_every);
    tc.checkpoint_every = cfg.integer("checkpoint_every", tc.checkpoint_every);
    tc.resume_path = cfg.str("resume", "");
    cfg.finish();

    Report rep("wavcoch-train", cfg);
    tc.wav_paths = resolve_wav_inputs(data, split);
    for (const std::string& p : tc.wav_paths) rep.input(p);
    if (!tc.resume_path.empty()) rep.input(tc.resume_path);

    wavcoch::WavCochModel model;
    wavcoch::WavCochTrainStats st = wavcoch::train_wavcoch(tc, model);
    rep.output("ckpt", tc.checkpoint_path);
    if (!tc.log_path.empty()) rep.output("log", tc.log_path);
    rep.metric("param_count", wavcoch::param_count(model));
    rep.metric("n_wavs", tc.wav_paths.size());
    rep.metric("steps_run", st.steps_run);
    rep.metric("step", st.step);
    rep.metric("loss", st.loss);
    rep.metric("mse", st.mse);
    rep.metric("entropy", st.entropy);
    rep.metric("usage", st.usage);
    rep.metric("stopped_early", st.stopped_early);
    return rep.done();
}

json cmd_lm_train(const json& raw) {
    Config cfg(raw);
    lm::LmTrainConfig tc;
    const std::string data = cfg.require_str("data");
    tc.checkpoint_path = cfg.require_str("out");

    const std::string preset = cfg.str("preset", "");
    lm::LmConfig base_model = preset.empty() ? lm::LmConfig{} : lm::LmConfig::preset(preset);
    tc.model =
        merged_model_config(lm::lm_config_to_json(base_model), cfg.object("model"), lm::lm_config_from_json);

    tc.steps = cfg.integer("steps", tc.steps);
    tc.batch_windows = static_cast<int>(cfg.integer("batch_windows", tc.batch_windows));
    tc.seed = cfg.seed();
    tc.stop_loss = cfg.number("stop_loss", tc.stop_loss);
    tc.sched.peak_lr = cfg.number("peak_lr", 3e-4);
    tc.sched.floor_lr = cfg.number("floor_lr", 0.0);
    tc.sched.warmup_steps = cfg.integer("warmup_steps", std::min(100L, tc.steps / 10));
    tc.sched.total_steps = cfg.integer("total_steps", tc.steps);
    tc.adamw.weight_decay = cfg.number("weight_decay", tc.adamw.weight_decay);
    tc.log_path = cfg.str("log", "");
    tc.log_every = cfg.integer("log_every", tc.log_every);
    tc.checkpoint_every = cfg.integer("checkpoint_every", tc.checkpoint_every);
    tc.resume_path = cfg.str("resume", "");
    cfg.finish();

    Report rep("lm-train", cfg);
    tc.ctok_paths = fs::is_directory(data) ? lm::list_ctoks(data) : std::vector<std::string>{data};
    for (const std::string& p : tc.ctok_paths) rep.input(p);
    if (!tc.resume_path.empty()) rep.input(tc.resume_path);

    lm::LmModel model;
    lm::LmTrainStats st = lm::train_lm(tc, model);
    rep.output("ckpt", tc.checkpoint_path);
    if (!tc.log_path.empty()) rep.output("log", tc.log_path);
    rep.metric("param_count", lm::param_count(model));
    rep.metric("n_streams", tc.ctok_paths.size());
    rep.metric("steps_run", st.steps_run);
    rep.metric("step", st.step);
    rep.metric("loss", st.loss);
    rep.metric("stopped_early", st.stopped_early);
    return rep.done();
}

json cmd_generate(const json& raw) {
    Config cfg(raw);
    const std::string ckpt = cfg.require_str("ckpt");
    const std::string prompt_path = cfg.require_str("prompt");
    const std::string out = cfg.require_str("out");
    const long n_new = cfg.integer("n_new", 0);
    const double temp = cfg.number("temp", 1.0);
    const long topk = cfg.integer("topk", 0);
    const uint64_t seed = cfg.seed();
    cfg.finish();
    if (n_new <= 0) throw std::invalid_argument("n_new must be a positive token count");

    Report rep("generate", cfg);
    rep.input(ckpt);
    rep.input(prompt_path);
    lm::LmModel model = lm::lm_from_checkpoint(load_checkpoint(ckpt));
    wavcoch::TokenStream prompt = wavcoch::load_ctok(prompt_path);
    if (model.cfg.vocab != (1 << prompt.bit_width))
        throw std::invalid_argument("prompt bit width does not match the model vocab");

    std::vector<uint16_t> full = lm::generate(model, prompt.ids, static_cast<int>(n_new), temp,
                                              static_cast<int>(topk), seed);
    wavcoch::TokenStream out_stream = prompt;
    out_stream.ids = full;
    fs::path parent = fs::path(out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    wavcoch::save_ctok(out, out_stream);
    rep.output("ctok", out);
    rep.metric("prompt_tokens", prompt.ids.size());
    rep.metric("new_tokens", n_new);
    rep.metric("total_tokens", full.size());
    return rep.done();
}

}  // namespace coch::pipeline
