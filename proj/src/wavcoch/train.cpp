#include "wavcoch/train.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace coch::wavcoch {

namespace fs = std::filesystem;

std::vector<std::string> list_wavs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no .wav files under " + dir);
    return out;
}

std::vector<audio::Waveform> load_corpus_clips(const std::vector<std::string>& paths,
                                               int clip_samples) {
    std::vector<audio::Waveform> clips;
    for (const auto& p : paths) {
        audio::Waveform w = audio::load_wav(p);
        if (w.sample_rate != dsp::kSampleRate) w = audio::resample(w, dsp::kSampleRate);
        for (auto& c : audio::frame_clips(w, clip_samples)) clips.push_back(std::move(c));
    }
    if (clips.empty())
        throw std::runtime_error("corpus yielded no clips of " + std::to_string(clip_samples) +
                                 " samples");
    return clips;
}

nlohmann::json wavcoch_config_to_json(const WavCochConfig& cfg) {
    return {{"bit_width", cfg.bit_width},
            {"encoder_layers", cfg.encoder_layers},
            {"decoder_layers", cfg.decoder_layers},
            {"encoder_channels", cfg.encoder_channels},
            {"decoder_channels", cfg.decoder_channels},
            {"enc_kernel", cfg.enc_kernel},
            {"dec_kernel", cfg.dec_kernel},
            {"frontend", dsp::to_string(cfg.frontend)},
            {"target", dsp::to_string(cfg.target)}};
}

WavCochConfig wavcoch_config_from_json(const nlohmann::json& j) {
    WavCochConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "bit_width") cfg.bit_width = val.get<int>();
        else if (key == "encoder_layers") cfg.encoder_layers = val.get<int>();
        else if (key == "decoder_layers") cfg.decoder_layers = val.get<int>();
        else if (key == "encoder_channels") cfg.encoder_channels = val.get<int>();
        else if (key == "decoder_channels") cfg.decoder_channels = val.get<int>();
        else if (key == "enc_kernel") cfg.enc_kernel = val.get<int>();
        else if (key == "dec_kernel") cfg.dec_kernel = val.get<int>();
        else if (key == "frontend") cfg.frontend = dsp::frontend_from_string(val.get<std::string>());
        else if (key == "target") cfg.target = dsp::target_from_string(val.get<std::string>());
        else throw std::invalid_argument("unknown tokenizer config key: " + key);
    }
    cfg.validate();
    return cfg;
}

Checkpoint wavcoch_checkpoint(const WavCochModel& m, const AdamWState& opt, long step,
                              const std::string& rng_state, const nlohmann::json& meta) {
    Checkpoint ck;
    ck.kind = "wavcoch";
    ck.config = wavcoch_config_to_json(m.cfg);
    ck.step = step;
    ck.rng_state = rng_state;
    ck.tensors = m.params;
    ck.has_optimizer = !opt.empty();
    if (ck.has_optimizer) ck.opt = opt;
    ck.meta = meta;
    return ck;
}

WavCochModel wavcoch_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "wavcoch") throw std::runtime_error("checkpoint kind is '" + ck.kind + "', expected 'wavcoch'");
    WavCochModel m;
    m.cfg = wavcoch_config_from_json(ck.config);
    const WavCochModel ref = init_wavcoch(m.cfg, 0);  // layout oracle
    if (ck.tensors.size() != ref.params.size())
        throw std::runtime_error("checkpoint tensor count does not match tokenizer layout");
    for (size_t i = 0; i < ref.params.size(); ++i) {
        if (ck.tensors[i].name != ref.params[i].name)
            throw std::runtime_error("checkpoint tensor '" + ck.tensors[i].name + "' out of place");
        if (ck.tensors[i].t.shape != ref.params[i].t.shape)
            throw std::runtime_error("checkpoint tensor '" + ck.tensors[i].name + "' has wrong shape");
    }
    m.params = ck.tensors;
    return m;
}

namespace {

struct ClipCache {
    TensorF frames;  // [T, frontend_dim]
    TensorF target;  // [T, target_rows]
};

double batch_usage(const GraphF& g, int logits, int bit_width) {
    const auto z = g.val(logits);
    const int rows = g.shape(logits)[0], cols = g.shape(logits)[1];
    std::set<int> seen;
    std::vector<float> bits(cols);
    for (int t = 0; t < rows; ++t) {
        for (int b = 0; b < cols; ++b) bits[b] = z[static_cast<size_t>(t) * cols + b] > 0.0f ? 1.0f : -1.0f;
        seen.insert(bits_to_id(bits.data(), cols));
    }
    return static_cast<double>(seen.size()) / static_cast<double>(1 << bit_width);
}

}  // namespace

WavCochTrainStats train_wavcoch(const WavCochTrainConfig& cfg, WavCochModel& model) {
    cfg.model.validate();
    if (cfg.batch_clips < 1) throw std::invalid_argument("batch_clips must be >= 1");
    if (cfg.steps < 0) throw std::invalid_argument("steps must be >= 0");

    const auto clips = load_corpus_clips(cfg.wav_paths, cfg.clip_samples);
    std::vector<ClipCache> cache;
    cache.reserve(clips.size());
    for (const auto& c : clips)
        cache.push_back({spectral_frames(cfg.model, c), target_frames(cfg.model, c)});

    AdamWState opt;
    RandomSource rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    long step = 0;
    if (!cfg.resume_path.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume_path);
        model = wavcoch_from_checkpoint(ck);
        if (ck.config != wavcoch_config_to_json(cfg.model))
            throw std::runtime_error("resume checkpoint was trained with a different tokenizer config");
        if (ck.has_optimizer) opt = ck.opt;
        if (!ck.rng_state.empty()) rng.deserialize(ck.rng_state);
        step = ck.step;
    } else {
        model = init_wavcoch(cfg.model, cfg.seed);
    }

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, cfg.resume_path.empty() ? std::ios::trunc : std::ios::app);
        if (!log) throw std::runtime_error("cannot open log file " + cfg.log_path);
    }

    WavCochTrainStats stats;
    stats.step = step;
    auto save = [&](long at_step) {
        if (cfg.checkpoint_path.empty()) return;
        nlohmann::json meta = {{"loss", stats.loss}, {"mse", stats.mse}};
        save_checkpoint(cfg.checkpoint_path,
                        wavcoch_checkpoint(model, opt, at_step, rng.serialize(), meta));
    };

    while (step < cfg.steps) {
        const double lr = lr_at(step + 1, cfg.sched);

        GraphF g;
        auto p = wire_params(g, model, true);
        std::vector<int> mse_terms, logit_nodes;
        for (int b = 0; b < cfg.batch_clips; ++b) {
            const size_t ci = cache.size() == 1 ? 0 : rng.below(cache.size());
            const int fr = g.leaf(cache[ci].frames, false);
            auto fwd = build_forward(g, cfg.model, p, fr);
            const int tgt = g.leaf(cache[ci].target, false);
            const int diff = g.sub(fwd.recon, tgt);
            mse_terms.push_back(g.mean(g.mul(diff, diff)));
            logit_nodes.push_back(fwd.logits);
        }
        int mse = mse_terms[0];
        for (size_t i = 1; i < mse_terms.size(); ++i) mse = g.add(mse, mse_terms[i]);
        if (mse_terms.size() > 1) mse = g.scale(mse, 1.0 / static_cast<double>(mse_terms.size()));
        const int logits = logit_nodes.size() == 1 ? logit_nodes[0] : g.concat_rows(logit_nodes);
        const int penalty = build_entropy_penalty(g, logits);
        const int loss = g.add(mse, g.scale(penalty, cfg.entropy_weight));
        g.backward(loss);

        std::vector<TensorF> grads;
        grads.reserve(model.params.size());
        for (size_t i = 0; i < model.params.size(); ++i) grads.push_back(g.grad_tensor(p.at(i)));
        adamw_step(model.params, grads, opt, lr, cfg.adamw);

        ++step;
        ++stats.steps_run;
        stats.step = step;
        stats.loss = g.scalar(loss);
        stats.mse = g.scalar(mse);
        stats.entropy = g.scalar(penalty);
        stats.usage = batch_usage(g, logits, cfg.model.bit_width);

        const bool done = step >= cfg.steps;
        const bool hit_stop = cfg.stop_loss >= 0.0 && stats.mse <= cfg.stop_loss;
        if (log && (done || hit_stop || cfg.log_every <= 0 || step % cfg.log_every == 0)) {
            nlohmann::json line = {{"step", step},       {"loss", stats.loss},
                                   {"mse", stats.mse},   {"entropy", stats.entropy},
                                   {"lr", lr},           {"usage", stats.usage}};
            log << line.dump() << "\n";
            log.flush();
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && !done && !hit_stop)
            save(step);
        if (hit_stop) {
            stats.stopped_early = true;
            break;
        }
    }

    save(step);
    return stats;
}

}  // namespace coch::wavcoch
