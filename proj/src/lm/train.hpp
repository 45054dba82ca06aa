#pragma once
// Trainer for the token LM. All CTOK streams under a directory are
// concatenated and packed into context-length windows (stride context-1, so
// every adjacent token pair is predicted exactly once); each step samples a
// batch of windows and takes one AdamW step on the mean cross entropy.
// Checkpoints carry parameters, moments, and the sampler RNG for bitwise
// resume.

#include <string>
#include <vector>

#include <json.hpp>

#include "core/optim.hpp"
#include "lm/model.hpp"
#include "util/checkpoint.hpp"

namespace coch::lm {

struct LmTrainConfig {
    LmConfig model;
    std::vector<std::string> ctok_paths;
    long steps = 1000;  // global step target (resume continues toward it)
    int batch_windows = 1;
    ScheduleSpec sched;  // defaults: peak 3e-4, 2000-step warmup, cosine decay
    AdamWConfig adamw;
    uint64_t seed = 0;
    double stop_loss = -1.0;  // stop once batch CE <= this (negative disables)
    std::string log_path;
    long log_every = 10;
    std::string checkpoint_path;
    long checkpoint_every = 0;
    std::string resume_path;
};

struct LmTrainStats {
    long steps_run = 0;
    long step = 0;
    double loss = 0.0;
    bool stopped_early = false;
};

// sorted .ctok files under dir (recursive); throws if none
std::vector<std::string> list_ctoks(const std::string& dir);

// concatenated ids of every stream, validated against the vocab
std::vector<int> load_token_corpus(const std::vector<std::string>& paths, int vocab);

// context-length windows, stride context_len-1; a single short window (>= 2
// tokens) is allowed so tiny corpora stay trainable
std::vector<std::vector<int>> pack_windows(const std::vector<int>& ids, int context_len);

nlohmann::json lm_config_to_json(const LmConfig& cfg);
LmConfig lm_config_from_json(const nlohmann::json& j);  // defaults + overrides, unknown keys rejected

Checkpoint lm_checkpoint(const LmModel& m, const AdamWState& opt, long step,
                         const std::string& rng_state, const nlohmann::json& meta);
LmModel lm_from_checkpoint(const Checkpoint& ck);

LmTrainStats train_lm(const LmTrainConfig& cfg, LmModel& model);

}  // namespace coch::lm
