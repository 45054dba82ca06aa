// Command-line front end. Every subcommand translates its flags into a JSON
// config, hands it to the shared library through coch_run_command, and prints
// the returned report. All behavior (defaults included) lives behind the C
// API; this file only does flag plumbing.

#include <CLI11.hpp>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <string>

#include "cochstream/cochstream.h"

using nlohmann::json;

namespace {

// accumulates one config object per subcommand; CLI11 callbacks write into it
struct CommandSpec {
    CLI::App* app = nullptr;
    json cfg = json::object();

    CLI::Option* str(const std::string& flag, const std::string& key, const std::string& help) {
        return app->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { cfg[key] = v; }, help);
    }
    CLI::Option* integer(const std::string& flag, const std::string& key, const std::string& help) {
        return app->add_option_function<long>(
            flag, [this, key](long v) { cfg[key] = v; }, help);
    }
    CLI::Option* number(const std::string& flag, const std::string& key, const std::string& help) {
        return app->add_option_function<double>(
            flag, [this, key](double v) { cfg[key] = v; }, help);
    }
    CLI::Option* toggle(const std::string& flag, const std::string& key, const std::string& help) {
        return app->add_flag_function(
            flag, [this, key, flag](int64_t) { cfg[key] = flag.rfind("--no-", 0) != 0; }, help);
    }
    CLI::Option* model_json(const std::string& help) {
        return app->add_option_function<std::string>(
            "--model",
            [this](const std::string& v) {
                json m = json::parse(v, nullptr, false);
                if (m.is_discarded() || !m.is_object())
                    throw CLI::ValidationError("--model", "must be a JSON object");
                cfg["model"] = m;
            },
            help);
    }
    void seed() { integer("--seed", "seed", "RNG seed"); }
};

void add_train_knobs(CommandSpec& c) {
    c.integer("--steps", "steps", "optimizer steps");
    c.number("--peak-lr", "peak_lr", "schedule peak learning rate");
    c.number("--floor-lr", "floor_lr", "schedule floor learning rate");
    c.integer("--warmup-steps", "warmup_steps", "linear warmup length");
    c.integer("--total-steps", "total_steps", "cosine decay horizon");
    c.number("--weight-decay", "weight_decay", "AdamW weight decay");
    c.number("--stop-loss", "stop_loss", "halt once the batch loss reaches this");
    c.str("--log", "log", "JSONL metrics path");
    c.integer("--log-every", "log_every", "steps between log lines");
    c.integer("--checkpoint-every", "checkpoint_every", "steps between checkpoint saves");
    c.str("--resume", "resume", "checkpoint to continue from");
    c.seed();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cochlear token pipeline"};
    app.set_version_flag("--version", std::string(coch_version()));
    app.require_subcommand(1);

    std::map<std::string, CommandSpec> cmds;
    auto sub = [&](const std::string& name, const std::string& desc) -> CommandSpec& {
        CommandSpec& c = cmds[name];
        c.app = app.add_subcommand(name, desc);
        return c;
    };

    {
        CommandSpec& c = sub("synth-corpus", "generate a labeled synthetic audio corpus");
        c.str("--out-dir", "out_dir", "corpus directory")->required();
        c.integer("--n-train", "n_train", "training utterances");
        c.integer("--n-dev", "n_dev", "development utterances");
        c.integer("--n-test", "n_test", "held-out utterances");
        c.number("--clip-seconds", "clip_seconds", "utterance length");
        c.seed();
    }
    {
        CommandSpec& c = sub("cochgram", "compute a cochleagram (or mel) from audio");
        c.str("--in", "in", "input WAV")->required();
        c.str("--out", "out", "output CGRM")->required();
        c.str("--kind", "kind", "cochleagram | mel");
        c.str("--pgm", "pgm", "also render an 8-bit PGM image");
    }
    {
        CommandSpec& c = sub("tokenize", "encode audio into cochlear tokens");
        c.str("--ckpt", "ckpt", "tokenizer checkpoint")->required();
        c.str("--in", "in", "input WAV or directory of WAVs")->required();
        c.str("--out", "out", "output CTOK file or directory")->required();
    }
    {
        CommandSpec& c = sub("detokenize", "decode tokens back to the target spectrogram");
        c.str("--ckpt", "ckpt", "tokenizer checkpoint")->required();
        c.str("--in", "in", "input CTOK")->required();
        c.str("--out", "out", "output CGRM")->required();
        c.str("--pgm", "pgm", "also render an 8-bit PGM image");
    }
    {
        CommandSpec& c = sub("invert", "gradient-descend a waveform to match a spectrogram");
        c.str("--in", "in", "target CGRM")->required();
        c.str("--out", "out", "output WAV")->required();
        c.integer("--steps", "steps", "optimizer steps");
        c.number("--lr", "lr", "Adam learning rate");
        c.number("--init-std", "init_std", "initial sample standard deviation");
        c.number("--stop-loss", "stop_loss", "halt once the loss reaches this");
        c.str("--trace", "trace", "loss trace CSV path");
        c.seed();
    }
    {
        CommandSpec& c = sub("wavcoch-train", "train the waveform tokenizer");
        c.str("--data", "data", "WAV file, directory, or manifest CSV")->required();
        c.str("--out", "out", "checkpoint path")->required();
        c.str("--split", "split", "manifest split to train on");
        c.str("--preset", "preset", "model preset (tiny)");
        c.model_json("model config overrides as JSON");
        c.integer("--batch-clips", "batch_clips", "clips per step");
        c.integer("--clip-samples", "clip_samples", "samples per training clip");
        c.number("--entropy-weight", "entropy_weight", "codebook entropy penalty weight");
        add_train_knobs(c);
    }
    {
        CommandSpec& c = sub("lm-train", "train the token sequence model");
        c.str("--data", "data", "CTOK file or directory")->required();
        c.str("--out", "out", "checkpoint path")->required();
        c.str("--preset", "preset", "model preset (tiny | 100M | 1B)");
        c.model_json("model config overrides as JSON");
        c.integer("--batch-windows", "batch_windows", "windows per step");
        add_train_knobs(c);
    }
    {
        CommandSpec& c = sub("generate", "sample a continuation of a token stream");
        c.str("--ckpt", "ckpt", "sequence-model checkpoint")->required();
        c.str("--prompt", "prompt", "prompt CTOK")->required();
        c.str("--out", "out", "output CTOK (prompt + continuation)")->required();
        c.integer("--n-new", "n_new", "tokens to sample");
        c.number("--temp", "temp", "sampling temperature (0 = argmax)");
        c.integer("--topk", "topk", "keep only the k most likely tokens (0 = all)");
        c.seed();
    }
    {
        CommandSpec& c = sub("purity", "token/label cluster purity on a labeled corpus");
        c.str("--ckpt", "ckpt", "tokenizer checkpoint")->required();
        c.str("--manifest", "manifest", "span-dataset manifest CSV")->required();
        c.str("--split", "split", "corpus split to score");
        c.str("--fold", "fold", "label fold: none | standard | TSV path");
        c.str("--out-csv", "out_csv", "per-token purity CSV");
    }
    {
        CommandSpec& c = sub("probe", "linear probe on span embeddings");
        c.str("--wavcoch", "wavcoch", "tokenizer checkpoint")->required();
        c.str("--lm", "lm", "sequence-model checkpoint")->required();
        c.str("--manifest", "manifest", "span-dataset manifest CSV")->required();
        c.str("--fold", "fold", "label fold: none | standard | TSV path");
        c.integer("--layer", "layer", "residual level (omit for dev selection)");
        c.str("--pooling", "pooling", "auto | mean | max | min");
        c.str("--train-split", "train_split", "probe training split");
        c.str("--eval-split", "eval_split", "probe evaluation split");
        c.integer("--selection-classes", "selection_classes", "classes kept for selection");
        c.str("--confusion-pgm", "confusion_pgm", "confusion matrix image path");
        c.toggle("--no-confusion-log-scale", "confusion_log_scale", "render raw counts");
        c.number("--l2", "l2", "probe L2 strength");
        c.integer("--max-iters", "max_iters", "probe iteration cap");
        c.number("--tol", "tol", "probe gradient tolerance");
    }
    {
        CommandSpec& c = sub("ssimi", "embedding/human similarity correlation on word pairs");
        c.str("--wavcoch", "wavcoch", "tokenizer checkpoint")->required();
        c.str("--lm", "lm", "sequence-model checkpoint")->required();
        c.str("--pairs", "pairs", "word-pair CSV")->required();
        c.str("--dev-pairs", "dev_pairs", "word-pair CSV for layer/pooling selection");
        c.integer("--layer", "layer", "residual level (omit for dev selection)");
        c.str("--pooling", "pooling", "auto | mean | max | min");
        c.str("--out-csv", "out_csv", "per-pair distances CSV");
    }
    {
        CommandSpec& c = sub("ablate-vocab", "train and score 12/13/14-bit tokenizer variants");
        c.str("--manifest", "manifest", "span-dataset manifest CSV")->required();
        c.str("--out-dir", "out_dir", "output directory")->required();
        c.str("--train-split", "train_split", "training split");
        c.str("--eval-split", "eval_split", "evaluation split");
        c.str("--fold", "fold", "label fold: none | standard | TSV path");
        c.str("--preset", "preset", "model preset (tiny | full)");
        c.model_json("model config overrides as JSON");
        c.integer("--steps", "steps", "training steps per variant");
        c.integer("--batch-clips", "batch_clips", "clips per step");
        c.integer("--clip-samples", "clip_samples", "samples per training clip");
        c.number("--peak-lr", "peak_lr", "schedule peak learning rate");
        c.integer("--warmup-steps", "warmup_steps", "linear warmup length");
        c.number("--entropy-weight", "entropy_weight", "codebook entropy penalty weight");
        c.seed();
    }
    {
        CommandSpec& c = sub("rollout-figure", "ground truth vs sampled continuations, as images");
        c.str("--wavcoch", "wavcoch", "tokenizer checkpoint")->required();
        c.str("--lm", "lm", "sequence-model checkpoint")->required();
        c.str("--in", "in", "prompt WAV")->required();
        c.str("--out-dir", "out_dir", "figure directory")->required();
        c.number("--cut-seconds", "cut_seconds", "prompt length (default: half the clip)");
        c.integer("--n-seeds", "n_seeds", "sampled continuations");
        c.integer("--n-new", "n_new", "tokens per continuation");
        c.number("--temp", "temp", "sampling temperature");
        c.integer("--topk", "topk", "top-k sampling cutoff");
        c.toggle("--no-invert", "invert", "skip waveform inversion of the panels");
        c.integer("--invert-steps", "invert_steps", "inversion steps per panel");
        c.number("--invert-lr", "invert_lr", "inversion learning rate");
        c.seed();
    }

    CLI11_PARSE(app, argc, argv);

    for (auto& [name, spec] : cmds) {
        if (!spec.app->parsed()) continue;
        char* report = nullptr;
        coch_status st = coch_run_command(name.c_str(), spec.cfg.dump().c_str(), &report);
        if (st != COCH_OK) {
            std::fprintf(stderr, "error: %s\n", coch_last_error());
            return static_cast<int>(st);
        }
        std::printf("%s\n", report);
        coch_string_free(report);
    }
    return 0;
}
