#pragma once
// Deterministic single-process trainer for the waveform tokenizer. Clips are
// cut from the corpus once, their spectral frames and targets cached, and
// every optimization step rebuilds a fresh graph over one sampled batch.
// Checkpoints carry parameters, optimizer moments, and the sampler RNG, so a
// resumed run is bit-identical to an uninterrupted one.

#include <string>
#include <vector>

#include <json.hpp>

#include "core/optim.hpp"
#include "util/checkpoint.hpp"
#include "wavcoch/model.hpp"

namespace coch::wavcoch {

struct WavCochTrainConfig {
    WavCochConfig model;
    std::vector<std::string> wav_paths;  // resampled to 16 kHz, cut into clips
    int clip_samples = dsp::kClipSamples;
    long steps = 1000;  // global step target (resume continues toward it)
    int batch_clips = 1;
    ScheduleSpec sched;
    AdamWConfig adamw;
    double entropy_weight = 0.001;
    uint64_t seed = 0;
    double stop_loss = -1.0;      // stop once batch mse <= this (negative disables)
    std::string log_path;         // JSONL metrics, empty = no log
    long log_every = 10;
    std::string checkpoint_path;  // empty = never saved
    long checkpoint_every = 0;    // 0 = only at the end
    std::string resume_path;      // continue from a saved checkpoint
};

struct WavCochTrainStats {
    long steps_run = 0;  // updates applied in this call
    long step = 0;       // global step afterwards
    double loss = 0.0;
    double mse = 0.0;
    double entropy = 0.0;
    double usage = 0.0;  // distinct ids on the last batch / vocab
    bool stopped_early = false;
};

// sorted .wav files under dir (recursive); throws if none
std::vector<std::string> list_wavs(const std::string& dir);

// load + resample + cut into fixed clips; throws if the corpus yields none
std::vector<audio::Waveform> load_corpus_clips(const std::vector<std::string>& paths,
                                               int clip_samples);

nlohmann::json wavcoch_config_to_json(const WavCochConfig& cfg);
// defaults + overrides; rejects unknown keys
WavCochConfig wavcoch_config_from_json(const nlohmann::json& j);

Checkpoint wavcoch_checkpoint(const WavCochModel& m, const AdamWState& opt, long step,
                              const std::string& rng_state, const nlohmann::json& meta);
// validates kind, config, and tensor layout against a fresh init
WavCochModel wavcoch_from_checkpoint(const Checkpoint& ck);

WavCochTrainStats train_wavcoch(const WavCochTrainConfig& cfg, WavCochModel& model);

}  // namespace coch::wavcoch
