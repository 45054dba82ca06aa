#include "lm/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "wavcoch/ctok.hpp"

namespace coch::lm {

namespace fs = std::filesystem;

std::vector<std::string> list_ctoks(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ctok") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no .ctok files under " + dir);
    return out;
}

std::vector<int> load_token_corpus(const std::vector<std::string>& paths, int vocab) {
    std::vector<int> ids;
    for (const auto& p : paths) {
        const auto t = wavcoch::load_ctok(p);
        if (t.bit_width < 1 || (1 << t.bit_width) > vocab)
            throw std::runtime_error("token stream " + p + " uses a vocab larger than the model's");
        ids.insert(ids.end(), t.ids.begin(), t.ids.end());
    }
    if (ids.size() < 2) throw std::runtime_error("token corpus has fewer than 2 tokens");
    return ids;
}

std::vector<std::vector<int>> pack_windows(const std::vector<int>& ids, int context_len) {
    if (context_len < 2) throw std::invalid_argument("pack_windows: context must be >= 2");
    if (ids.size() < 2) throw std::invalid_argument("pack_windows: need at least 2 tokens");
    std::vector<std::vector<int>> out;
    const size_t n = ids.size(), w = static_cast<size_t>(context_len);
    for (size_t s = 0; s + 1 < n; s += w - 1) {
        const size_t e = std::min(n, s + w);
        out.emplace_back(ids.begin() + s, ids.begin() + e);
        if (e == n) break;
    }
    return out;
}

nlohmann::json lm_config_to_json(const LmConfig& cfg) {
    return {{"n_layers", cfg.n_layers},       {"n_heads", cfg.n_heads},
            {"d_model", cfg.d_model},         {"context_len", cfg.context_len},
            {"vocab", cfg.vocab},             {"dropout", cfg.dropout}};
}

LmConfig lm_config_from_json(const nlohmann::json& j) {
    LmConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "preset") cfg = LmConfig::preset(val.get<std::string>());
    }
    for (const auto& [key, val] : j.items()) {
        if (key == "preset") continue;
        else if (key == "n_layers") cfg.n_layers = val.get<int>();
        else if (key == "n_heads") cfg.n_heads = val.get<int>();
        else if (key == "d_model") cfg.d_model = val.get<int>();
        else if (key == "context_len") cfg.context_len = val.get<int>();
        else if (key == "vocab") cfg.vocab = val.get<int>();
        else if (key == "dropout") cfg.dropout = val.get<double>();
        else throw std::invalid_argument("unknown lm config key: " + key);
    }
    cfg.validate();
    return cfg;
}

Checkpoint lm_checkpoint(const LmModel& m, const AdamWState& opt, long step,
                         const std::string& rng_state, const nlohmann::json& meta) {
    Checkpoint ck;
    ck.kind = "auristream";
    ck.config = lm_config_to_json(m.cfg);
    ck.step = step;
    ck.rng_state = rng_state;
    ck.tensors = m.params;
    ck.has_optimizer = !opt.empty();
    if (ck.has_optimizer) ck.opt = opt;
    ck.meta = meta;
    return ck;
}

LmModel lm_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "auristream")
        throw std::runtime_error("checkpoint kind is '" + ck.kind + "', expected 'auristream'");
    LmModel m;
    m.cfg = lm_config_from_json(ck.config);
    const LmModel ref = init_lm(m.cfg, 0);  // layout oracle
    if (ck.tensors.size() != ref.params.size())
        throw std::runtime_error("checkpoint tensor count does not match lm layout");
    for (size_t i = 0; i < ref.params.size(); ++i) {
        if (ck.tensors[i].name != ref.params[i].name)
            throw std::runtime_error("checkpoint tensor '" + ck.tensors[i].name + "' out of place");
        if (ck.tensors[i].t.shape != ref.params[i].t.shape)
            throw std::runtime_error("checkpoint tensor '" + ck.tensors[i].name + "' has wrong shape");
    }
    m.params = ck.tensors;
    return m;
}

LmTrainStats train_lm(const LmTrainConfig& cfg, LmModel& model) {
    cfg.model.validate();
    if (cfg.batch_windows < 1) throw std::invalid_argument("batch_windows must be >= 1");
    if (cfg.steps < 0) throw std::invalid_argument("steps must be >= 0");

    const auto corpus = load_token_corpus(cfg.ctok_paths, cfg.model.vocab);
    const auto windows = pack_windows(corpus, cfg.model.context_len);

    AdamWState opt;
    RandomSource rng(cfg.seed ^ 0x51f2cd6a36b2a3c9ull);
    long step = 0;
    if (!cfg.resume_path.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume_path);
        model = lm_from_checkpoint(ck);
        if (ck.config != lm_config_to_json(cfg.model))
            throw std::runtime_error("resume checkpoint was trained with a different lm config");
        if (ck.has_optimizer) opt = ck.opt;
        if (!ck.rng_state.empty()) rng.deserialize(ck.rng_state);
        step = ck.step;
    } else {
        model = init_lm(cfg.model, cfg.seed);
    }

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, cfg.resume_path.empty() ? std::ios::trunc : std::ios::app);
        if (!log) throw std::runtime_error("cannot open log file " + cfg.log_path);
    }

    LmTrainStats stats;
    stats.step = step;
    auto save = [&](long at_step) {
        if (cfg.checkpoint_path.empty()) return;
        save_checkpoint(cfg.checkpoint_path,
                        lm_checkpoint(model, opt, at_step, rng.serialize(), {{"loss", stats.loss}}));
    };

    while (step < cfg.steps) {
        const double lr = lr_at(step + 1, cfg.sched);

        GraphF g;
        const auto p = wire_lm_params(g, model, true);
        std::vector<int> terms;
        for (int b = 0; b < cfg.batch_windows; ++b) {
            const size_t wi = windows.size() == 1 ? 0 : rng.below(windows.size());
            terms.push_back(build_lm_loss(g, cfg.model, p, windows[wi]));
        }
        int loss = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) loss = g.add(loss, terms[i]);
        if (terms.size() > 1) loss = g.scale(loss, 1.0 / static_cast<double>(terms.size()));
        g.backward(loss);

        std::vector<TensorF> grads;
        grads.reserve(model.params.size());
        for (size_t i = 0; i < model.params.size(); ++i) grads.push_back(g.grad_tensor(p.at(i)));
        adamw_step(model.params, grads, opt, lr, cfg.adamw);

        ++step;
        ++stats.steps_run;
        stats.step = step;
        stats.loss = g.scalar(loss);

        const bool done = step >= cfg.steps;
        const bool hit_stop = cfg.stop_loss >= 0.0 && stats.loss <= cfg.stop_loss;
        if (log && (done || hit_stop || cfg.log_every <= 0 || step % cfg.log_every == 0)) {
            nlohmann::json line = {{"step", step}, {"loss", stats.loss}, {"lr", lr}};
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

}  // namespace coch::lm
