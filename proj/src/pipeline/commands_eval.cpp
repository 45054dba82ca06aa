// Evaluation commands: token purity, span probing with layer/pooling
// selection, word-pair similarity scoring, vocabulary-size ablation, and the
// continuation figure. All of them treat checkpoints and corpora as
// read-only and put every derived number into the report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include "audio/wav.hpp"
#include "dsp/frontend.hpp"
#include "eval/dataset.hpp"
#include "eval/fold.hpp"
#include "eval/metrics.hpp"
#include "eval/probe.hpp"
#include "inversion/invert.hpp"
#include "lm/train.hpp"
#include "pipeline/commands.hpp"
#include "pipeline/report.hpp"
#include "util/hash.hpp"
#include "util/io.hpp"
#include "wavcoch/ctok.hpp"
#include "wavcoch/train.hpp"

namespace fs = std::filesystem;

namespace coch::pipeline {

namespace {

audio::Waveform load_wav_16k(const std::string& path) {
    audio::Waveform w = audio::load_wav(path);
    if (w.sample_rate != dsp::kSampleRate) w = audio::resample(w, dsp::kSampleRate);
    return w;
}

std::optional<eval::PhonemeFold> make_fold(const std::string& key) {
    if (key == "none") return std::nullopt;
    if (key == "standard") return eval::PhonemeFold::standard();
    return eval::PhonemeFold::load(key);
}

// returns false when the fold drops the label; throws on labels the fold
// does not know
bool fold_label(const std::optional<eval::PhonemeFold>& fold, const std::string& raw,
                std::string& out) {
    if (!fold) {
        out = raw;
        return true;
    }
    if (fold->dropped(raw)) return false;
    out = fold->collapse(raw);
    return true;
}

void hash_utterance_inputs(Report& rep, const std::vector<const eval::Utterance*>& utts) {
    for (const eval::Utterance* u : utts) {
        rep.input(u->wav_path);
        rep.input(fs::path(u->wav_path).replace_extension(".tsv").string());
    }
}

std::vector<wavcoch::TokenStream> tokenize_utts(const wavcoch::WavCochModel& m,
                                                const std::vector<const eval::Utterance*>& utts) {
    std::vector<wavcoch::TokenStream> out;
    out.reserve(utts.size());
    for (const eval::Utterance* u : utts) out.push_back(wavcoch::tokenize(m, load_wav_16k(u->wav_path)));
    return out;
}

// per-frame (token id, class string) pairs for every labeled, kept frame
struct LabeledFrames {
    std::vector<int> tokens;
    std::vector<std::string> labels;
    long frames_total = 0;
};

LabeledFrames collect_labeled_frames(const std::vector<const eval::Utterance*>& utts,
                                     const std::vector<wavcoch::TokenStream>& toks,
                                     const std::optional<eval::PhonemeFold>& fold) {
    LabeledFrames out;
    for (size_t i = 0; i < utts.size(); ++i) {
        const int n_frames = static_cast<int>(toks[i].ids.size());
        out.frames_total += n_frames;
        std::vector<int> owner = eval::frame_span_index(utts[i]->spans, n_frames);
        for (int f = 0; f < n_frames; ++f) {
            if (owner[f] < 0) continue;
            std::string cls;
            if (!fold_label(fold, utts[i]->spans[owner[f]].label, cls)) continue;
            out.tokens.push_back(toks[i].ids[f]);
            out.labels.push_back(std::move(cls));
        }
    }
    return out;
}

std::vector<std::string> sorted_classes(const std::vector<std::string>& labels) {
    std::set<std::string> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

std::vector<int> label_ids(const std::vector<std::string>& labels,
                           const std::vector<std::string>& classes) {
    std::vector<int> ids;
    ids.reserve(labels.size());
    for (const std::string& l : labels) {
        auto it = std::lower_bound(classes.begin(), classes.end(), l);
        if (it == classes.end() || *it != l) throw std::invalid_argument("label outside class set: " + l);
        ids.push_back(static_cast<int>(it - classes.begin()));
    }
    return ids;
}

double fraction_used(const std::vector<long>& counts) {
    long used = 0;
    for (long c : counts) used += c > 0;
    return counts.empty() ? 0.0 : static_cast<double>(used) / counts.size();
}

// ---- span embedding plumbing shared by probe and ssimi ----

struct SpanRecord {
    int utt = 0;  // index into the token-stream list
    lm::Span span;
    std::string cls;
};

using Cell = std::pair<int, int>;  // residual level, pooling (0 mean / 1 max / 2 min)

lm::Pooling pooling_of(int p) { return static_cast<lm::Pooling>(p); }

const char* kPoolingNames[3] = {"mean", "max", "min"};

// one [n_records, d] matrix per requested cell; a single forward pass per
// utterance feeds every cell when the stream fits the context window
std::map<Cell, TensorF> embed_cells(const lm::LmModel& m,
                                    const std::vector<wavcoch::TokenStream>& toks,
                                    const std::vector<SpanRecord>& recs,
                                    const std::vector<Cell>& cells) {
    const int d = m.cfg.d_model;
    std::map<Cell, TensorF> out;
    for (const Cell& c : cells) out[c] = TensorF({static_cast<int>(recs.size()), d});

    // group record indices by utterance
    std::map<int, std::vector<size_t>> by_utt;
    for (size_t r = 0; r < recs.size(); ++r) by_utt[recs[r].utt].push_back(r);

    for (const auto& [u, rows] : by_utt) {
        const std::vector<uint16_t>& ids = toks[u].ids;
        if (static_cast<long>(ids.size()) <= m.cfg.context_len) {
            std::vector<int> as_int(ids.begin(), ids.end());
            std::vector<TensorF> hs = lm_hidden_states(m, as_int);
            for (const Cell& c : cells) {
                const TensorF& h = hs[c.first];
                TensorF& dst = out[c];
                for (size_t r : rows) {
                    const lm::Span& sp = recs[r].span;
                    float* o = dst.data() + r * d;
                    for (int j = 0; j < d; ++j) {
                        float acc = c.second == 0 ? 0.0f : h.v[sp.a * d + j];
                        for (long t = sp.a; t < sp.b; ++t) {
                            float v = h.v[t * d + j];
                            if (c.second == 0) acc += v;
                            else if (c.second == 1) acc = std::max(acc, v);
                            else acc = std::min(acc, v);
                        }
                        o[j] = c.second == 0 ? acc / (sp.b - sp.a) : acc;
                    }
                }
            }
        } else {  // long stream: per-span sliding windows
            std::vector<lm::Span> spans;
            for (size_t r : rows) spans.push_back(recs[r].span);
            for (const Cell& c : cells) {
                TensorF e = lm::extract_embeddings(m, ids, spans, c.first, pooling_of(c.second));
                TensorF& dst = out[c];
                for (size_t k = 0; k < rows.size(); ++k)
                    std::copy_n(e.data() + k * d, d, dst.data() + rows[k] * d);
            }
        }
    }
    return out;
}

TensorF gather_rows(const TensorF& src, const std::vector<size_t>& rows) {
    const int d = src.cols();
    TensorF out({static_cast<int>(rows.size()), d});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(src.data() + rows[i] * d, d, out.data() + i * d);
    return out;
}

std::vector<Cell> full_grid(int n_layers) {
    std::vector<Cell> cells;
    for (int l = 0; l <= n_layers; ++l)
        for (int p = 0; p < 3; ++p) cells.push_back({l, p});
    return cells;
}

}  // namespace

json cmd_purity(const json& raw) {
    Config cfg(raw);
    const std::string ckpt = cfg.require_str("ckpt");
    const std::string manifest = cfg.require_str("manifest");
    const std::string split = cfg.str("split", "test");
    const std::string fold_key = cfg.str("fold", "none");
    const std::string out_csv = cfg.str("out_csv", "");
    cfg.finish();

    Report rep("purity", cfg);
    rep.input(ckpt);
    rep.input(manifest);
    if (fold_key != "none" && fold_key != "standard") rep.input(fold_key);

    wavcoch::WavCochModel model = wavcoch::wavcoch_from_checkpoint(load_checkpoint(ckpt));
    eval::LabeledSpanDataset ds = eval::load_span_dataset(manifest);
    std::vector<const eval::Utterance*> utts = ds.split(split);
    if (utts.empty()) throw std::invalid_argument("split '" + split + "' has no utterances");
    hash_utterance_inputs(rep, utts);

    std::optional<eval::PhonemeFold> fold = make_fold(fold_key);
    std::vector<wavcoch::TokenStream> toks = tokenize_utts(model, utts);
    LabeledFrames lf = collect_labeled_frames(utts, toks, fold);
    if (lf.tokens.empty()) throw std::invalid_argument("no labeled frames in split '" + split + "'");

    std::vector<std::string> classes = fold ? fold->classes() : sorted_classes(lf.labels);
    eval::PurityResult pr =
        eval::token_purity(lf.tokens, label_ids(lf.labels, classes), model.cfg.vocab(),
                           static_cast<int>(classes.size()));

    std::vector<const wavcoch::TokenStream*> ptrs;
    for (const auto& t : toks) ptrs.push_back(&t);
    wavcoch::CodebookStats stats = wavcoch::codebook_stats(ptrs, model.cfg.bit_width);

    if (!out_csv.empty()) {
        fs::path parent = fs::path(out_csv).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        std::ofstream f(out_csv);
        if (!f) throw std::runtime_error("cannot write " + out_csv);
        f << "id,frames,purity\n";
        for (size_t i = 0; i < pr.counts.size(); ++i)
            if (pr.counts[i] > 0) f << i << "," << pr.counts[i] << "," << pr.per_id[i] << "\n";
        rep.output("csv", out_csv);
    }

    rep.metric("purity", pr.mean);
    rep.metric("labeled_usage", fraction_used(pr.counts));
    rep.metric("usage", stats.usage);
    rep.metric("entropy_bits", stats.entropy_bits);
    rep.metric("vocab", model.cfg.vocab());
    rep.metric("n_classes", classes.size());
    rep.metric("n_labeled_frames", lf.tokens.size());
    rep.metric("n_frames", lf.frames_total);
    rep.metric("n_utterances", utts.size());
    return rep.done();
}

json cmd_probe(const json& raw) {
    Config cfg(raw);
    const std::string wavcoch_path = cfg.require_str("wavcoch");
    const std::string lm_path = cfg.require_str("lm");
    const std::string manifest = cfg.require_str("manifest");
    const std::string fold_key = cfg.str("fold", "none");
    const long layer_key = cfg.integer("layer", -1);
    const std::string pooling_key = cfg.str("pooling", "auto");
    const std::string train_split = cfg.str("train_split", "train");
    const std::string eval_split = cfg.str("eval_split", "test");
    const long top_k = cfg.integer("selection_classes", 10);
    const std::string confusion_pgm = cfg.str("confusion_pgm", "");
    const bool confusion_log = cfg.flag("confusion_log_scale", true);
    eval::ProbeConfig pc;
    pc.l2_strength = cfg.number("l2", pc.l2_strength);
    pc.max_iters = cfg.integer("max_iters", pc.max_iters);
    pc.tol = cfg.number("tol", pc.tol);
    cfg.finish();

    const bool auto_select = layer_key < 0 || pooling_key == "auto";
    if (!auto_select && pooling_key != "mean" && pooling_key != "max" && pooling_key != "min")
        throw std::invalid_argument("pooling must be auto, mean, max, or min");

    Report rep("probe", cfg);
    rep.input(wavcoch_path);
    rep.input(lm_path);
    rep.input(manifest);
    if (fold_key != "none" && fold_key != "standard") rep.input(fold_key);

    wavcoch::WavCochModel wc = wavcoch::wavcoch_from_checkpoint(load_checkpoint(wavcoch_path));
    lm::LmModel lmm = lm::lm_from_checkpoint(load_checkpoint(lm_path));
    if (lmm.cfg.vocab != wc.cfg.vocab())
        throw std::invalid_argument("tokenizer vocab does not match the model vocab");
    eval::LabeledSpanDataset ds = eval::load_span_dataset(manifest);
    std::optional<eval::PhonemeFold> fold = make_fold(fold_key);

    std::vector<const eval::Utterance*> train_utts = ds.split(train_split);
    std::vector<const eval::Utterance*> eval_utts = ds.split(eval_split);
    if (train_utts.empty()) throw std::invalid_argument("split '" + train_split + "' has no utterances");
    if (eval_utts.empty()) throw std::invalid_argument("split '" + eval_split + "' has no utterances");

    // selection pool: the dev split, or a sentence-hash carve of train
    std::vector<const eval::Utterance*> dev_utts = ds.split("dev");
    std::string dev_source = "dev";
    std::vector<const eval::Utterance*> sel_train = train_utts;
    if (auto_select && dev_utts.empty()) {
        dev_source = "carved";
        sel_train.clear();
        for (const eval::Utterance* u : train_utts)
            (fnv1a64(u->sentence) % 5 == 0 ? dev_utts : sel_train).push_back(u);
        if (dev_utts.empty() || sel_train.empty())
            throw std::invalid_argument(
                "cannot carve a selection split from '" + train_split +
                "'; provide a dev split or explicit layer and pooling");
    }

    hash_utterance_inputs(rep, train_utts);
    hash_utterance_inputs(rep, eval_utts);
    if (auto_select && dev_source == "dev") hash_utterance_inputs(rep, dev_utts);

    // one token stream per distinct utterance used anywhere
    std::vector<const eval::Utterance*> all_utts = train_utts;
    for (const eval::Utterance* u : eval_utts) all_utts.push_back(u);
    if (auto_select && dev_source == "dev")
        for (const eval::Utterance* u : dev_utts) all_utts.push_back(u);
    std::vector<wavcoch::TokenStream> toks = tokenize_utts(wc, all_utts);
    std::map<const eval::Utterance*, int> utt_index;
    for (size_t i = 0; i < all_utts.size(); ++i) utt_index[all_utts[i]] = static_cast<int>(i);

    // spans clamped to the stream and to the model context; empty ones dropped
    auto records_shared = [&](const std::vector<const eval::Utterance*>& utts) {
        std::vector<SpanRecord> recs;
        for (const eval::Utterance* u : utts) {
            const int ti = utt_index.at(u);
            const long n_frames = static_cast<long>(toks[ti].ids.size());
            for (const eval::LabeledSpan& s : u->spans) {
                std::string cls;
                if (!fold_label(fold, s.label, cls)) continue;
                auto [a, b] = eval::span_to_frames(s.start, s.end);
                b = std::min(b, n_frames);
                a = std::max(a, b - static_cast<long>(lmm.cfg.context_len));
                if (a >= b) continue;
                recs.push_back({ti, {a, b}, std::move(cls)});
            }
        }
        return recs;
    };

    std::vector<SpanRecord> train_recs = records_shared(train_utts);
    std::vector<SpanRecord> eval_recs = records_shared(eval_utts);
    if (train_recs.empty()) throw std::invalid_argument("no usable training spans");
    if (eval_recs.empty()) throw std::invalid_argument("no usable evaluation spans");

    // class set spans both sides so every label can be scored
    std::vector<std::string> observed;
    for (const SpanRecord& r : train_recs) observed.push_back(r.cls);
    for (const SpanRecord& r : eval_recs) observed.push_back(r.cls);
    std::vector<std::string> classes = fold ? fold->classes() : sorted_classes(observed);

    int sel_layer = static_cast<int>(layer_key);
    int sel_pool = pooling_key == "max" ? 1 : pooling_key == "min" ? 2 : 0;
    json grid = json::array();

    if (auto_select) {
        std::vector<SpanRecord> strain_recs = records_shared(sel_train);
        std::vector<SpanRecord> dev_recs = records_shared(dev_utts);
        if (strain_recs.empty() || dev_recs.empty())
            throw std::invalid_argument("selection needs spans on both sides of the dev carve");

        // restrict selection to the most frequent dev classes
        std::map<std::string, long> dev_counts;
        for (const SpanRecord& r : dev_recs) ++dev_counts[r.cls];
        std::vector<std::pair<long, std::string>> ranked;
        for (const auto& [cls, n] : dev_counts) ranked.push_back({-n, cls});
        std::sort(ranked.begin(), ranked.end());
        std::set<std::string> keep;
        for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(top_k); ++i)
            keep.insert(ranked[i].second);
        auto filter = [&](std::vector<SpanRecord> v) {
            std::erase_if(v, [&](const SpanRecord& r) { return !keep.count(r.cls); });
            return v;
        };
        strain_recs = filter(std::move(strain_recs));
        dev_recs = filter(std::move(dev_recs));
        std::vector<std::string> sel_classes = sorted_classes([&] {
            std::vector<std::string> v;
            for (const SpanRecord& r : strain_recs) v.push_back(r.cls);
            for (const SpanRecord& r : dev_recs) v.push_back(r.cls);
            return v;
        }());
        if (sel_classes.size() < 2)
            throw std::invalid_argument("selection needs at least two classes in the dev pool");

        std::vector<SpanRecord> sel_all = strain_recs;
        sel_all.insert(sel_all.end(), dev_recs.begin(), dev_recs.end());
        std::map<Cell, TensorF> embs = embed_cells(lmm, toks, sel_all, full_grid(lmm.cfg.n_layers));

        std::vector<size_t> tr_rows(strain_recs.size()), dv_rows(dev_recs.size());
        for (size_t i = 0; i < tr_rows.size(); ++i) tr_rows[i] = i;
        for (size_t i = 0; i < dv_rows.size(); ++i) dv_rows[i] = strain_recs.size() + i;

        std::vector<int> tr_y, dv_y;
        for (const SpanRecord& r : strain_recs)
            tr_y.push_back(static_cast<int>(std::lower_bound(sel_classes.begin(), sel_classes.end(), r.cls) -
                                            sel_classes.begin()));
        for (const SpanRecord& r : dev_recs)
            dv_y.push_back(static_cast<int>(std::lower_bound(sel_classes.begin(), sel_classes.end(), r.cls) -
                                            sel_classes.begin()));

        std::vector<eval::GridCell> cells;
        for (const auto& [cell, mat] : embs) {
            eval::ProbeModel pm = eval::train_linear_probe(gather_rows(mat, tr_rows), tr_y, sel_classes, pc);
            std::vector<int> pred = eval::probe_predict(pm, gather_rows(mat, dv_rows));
            double score = eval::weighted_accuracy(pred, dv_y);
            cells.push_back({cell.first, cell.second, score});
            grid.push_back({{"layer", cell.first},
                            {"pooling", kPoolingNames[cell.second]},
                            {"dev_weighted_accuracy", score}});
        }
        eval::GridCell best = eval::select_layer_pooling(cells);
        sel_layer = best.layer;
        sel_pool = best.pooling;
        rep.metric("selection",
                   json{{"dev_source", dev_source},
                        {"classes", sel_classes},
                        {"n_train_spans", strain_recs.size()},
                        {"n_dev_spans", dev_recs.size()},
                        {"dev_weighted_accuracy", best.score}});
    }
    if (sel_layer < 0 || sel_layer > lmm.cfg.n_layers)
        throw std::invalid_argument("layer must lie in [0, " + std::to_string(lmm.cfg.n_layers) + "]");

    // final probe: full training split at the chosen cell, scored on the
    // held-out split
    std::vector<SpanRecord> final_all = train_recs;
    final_all.insert(final_all.end(), eval_recs.begin(), eval_recs.end());
    Cell chosen{sel_layer, sel_pool};
    std::map<Cell, TensorF> embs = embed_cells(lmm, toks, final_all, {chosen});
    const TensorF& mat = embs.at(chosen);

    std::vector<size_t> tr_rows(train_recs.size()), ev_rows(eval_recs.size());
    for (size_t i = 0; i < tr_rows.size(); ++i) tr_rows[i] = i;
    for (size_t i = 0; i < ev_rows.size(); ++i) ev_rows[i] = train_recs.size() + i;
    std::vector<int> tr_y, ev_y;
    for (const SpanRecord& r : train_recs)
        tr_y.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), r.cls) -
                                        classes.begin()));
    for (const SpanRecord& r : eval_recs)
        ev_y.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), r.cls) -
                                        classes.begin()));

    TensorF tr_x = gather_rows(mat, tr_rows), ev_x = gather_rows(mat, ev_rows);
    eval::ProbeModel pm = eval::train_linear_probe(tr_x, tr_y, classes, pc);
    std::vector<int> pred = eval::probe_predict(pm, ev_x);

    // chance floor: always answer the most frequent training class
    std::vector<long> tr_hist(classes.size(), 0);
    for (int y : tr_y) ++tr_hist[y];
    int majority = static_cast<int>(std::max_element(tr_hist.begin(), tr_hist.end()) - tr_hist.begin());
    long majority_hits = 0;
    for (int y : ev_y) majority_hits += y == majority;

    if (!confusion_pgm.empty()) {
        std::vector<long> cm = eval::confusion_matrix(pred, ev_y, static_cast<int>(classes.size()));
        fs::path parent = fs::path(confusion_pgm).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        eval::save_confusion_pgm(confusion_pgm, cm, static_cast<int>(classes.size()), confusion_log);
        rep.output("confusion_pgm", confusion_pgm);
    }

    rep.metric("layer", sel_layer);
    rep.metric("pooling", kPoolingNames[sel_pool]);
    if (!grid.empty()) rep.metric("grid", grid);
    rep.metric("accuracy", eval::plain_accuracy(pred, ev_y));
    rep.metric("weighted_accuracy", eval::weighted_accuracy(pred, ev_y));
    rep.metric("balanced_accuracy", eval::balanced_accuracy(pred, ev_y));
    rep.metric("cross_entropy", eval::probe_ce(pm, ev_x, ev_y));
    rep.metric("majority_baseline", static_cast<double>(majority_hits) / ev_y.size());
    rep.metric("majority_class", classes[majority]);
    rep.metric("classes", classes);
    rep.metric("n_train_spans", train_recs.size());
    rep.metric("n_eval_spans", eval_recs.size());
    rep.metric("probe_iters", pm.iters);
    rep.metric("probe_objective", pm.final_objective);
    return rep.done();
}

json cmd_ssimi(const json& raw) {
    Config cfg(raw);
    const std::string wavcoch_path = cfg.require_str("wavcoch");
    const std::string lm_path = cfg.require_str("lm");
    const std::string pairs_path = cfg.require_str("pairs");
    const std::string dev_pairs_path = cfg.str("dev_pairs", "");
    const long layer_key = cfg.integer("layer", -1);
    const std::string pooling_key = cfg.str("pooling", "auto");
    const std::string out_csv = cfg.str("out_csv", "");
    cfg.finish();

    const bool auto_select = layer_key < 0 || pooling_key == "auto";
    if (auto_select && dev_pairs_path.empty())
        throw std::invalid_argument("layer/pooling selection needs dev_pairs; or pass explicit layer and pooling");
    if (!auto_select && pooling_key != "mean" && pooling_key != "max" && pooling_key != "min")
        throw std::invalid_argument("pooling must be auto, mean, max, or min");

    Report rep("ssimi", cfg);
    rep.input(wavcoch_path);
    rep.input(lm_path);
    rep.input(pairs_path);
    wavcoch::WavCochModel wc = wavcoch::wavcoch_from_checkpoint(load_checkpoint(wavcoch_path));
    lm::LmModel lmm = lm::lm_from_checkpoint(load_checkpoint(lm_path));
    if (lmm.cfg.vocab != wc.cfg.vocab())
        throw std::invalid_argument("tokenizer vocab does not match the model vocab");

    eval::WordPairSet pairs = eval::load_word_pairs(pairs_path);
    eval::WordPairSet dev_pairs;
    if (auto_select) {
        rep.input(dev_pairs_path);
        dev_pairs = eval::load_word_pairs(dev_pairs_path);
    }

    // every distinct word wav becomes one full-stream record
    std::vector<std::string> wav_list;
    std::map<std::string, int> wav_row;
    auto note_wav = [&](const std::string& p) {
        if (wav_row.emplace(p, static_cast<int>(wav_list.size())).second) wav_list.push_back(p);
    };
    for (const eval::WordPair& p : pairs.pairs) {
        note_wav(p.wav_a);
        note_wav(p.wav_b);
    }
    for (const eval::WordPair& p : dev_pairs.pairs) {
        note_wav(p.wav_a);
        note_wav(p.wav_b);
    }

    std::vector<wavcoch::TokenStream> toks;
    toks.reserve(wav_list.size());
    std::vector<SpanRecord> recs;
    for (size_t i = 0; i < wav_list.size(); ++i) {
        rep.input(wav_list[i]);
        toks.push_back(wavcoch::tokenize(wc, load_wav_16k(wav_list[i])));
        long n = static_cast<long>(toks.back().ids.size());
        long a = std::max(0L, n - static_cast<long>(lmm.cfg.context_len));
        recs.push_back({static_cast<int>(i), {a, n}, ""});
    }

    auto subset_ssimi = [&](const eval::WordPairSet& set, const std::string& name,
                            const std::map<Cell, TensorF>& embs, const Cell& cell,
                            json* per_pair) -> std::optional<double> {
        const TensorF& mat = embs.at(cell);
        const int d = mat.cols();
        std::vector<double> dist, human;
        for (const eval::WordPair* p : set.subset(name)) {
            std::vector<float> a(mat.data() + wav_row.at(p->wav_a) * d,
                                 mat.data() + (wav_row.at(p->wav_a) + 1) * d);
            std::vector<float> b(mat.data() + wav_row.at(p->wav_b) * d,
                                 mat.data() + (wav_row.at(p->wav_b) + 1) * d);
            double cd = eval::cosine_distance(a, b);
            dist.push_back(cd);
            human.push_back(p->score);
            if (per_pair)
                per_pair->push_back({{"word_a", p->word_a},
                                     {"word_b", p->word_b},
                                     {"subset", p->subset},
                                     {"score", p->score},
                                     {"cosine_distance", cd}});
        }
        if (dist.size() < 2) return std::nullopt;
        return eval::ssimi_score(dist, human);
    };
    auto all_ssimi = [&](const eval::WordPairSet& set, const std::map<Cell, TensorF>& embs,
                         const Cell& cell) -> std::optional<double> {
        const TensorF& mat = embs.at(cell);
        const int d = mat.cols();
        std::vector<double> dist, human;
        for (const eval::WordPair& p : set.pairs) {
            std::vector<float> a(mat.data() + wav_row.at(p.wav_a) * d,
                                 mat.data() + (wav_row.at(p.wav_a) + 1) * d);
            std::vector<float> b(mat.data() + wav_row.at(p.wav_b) * d,
                                 mat.data() + (wav_row.at(p.wav_b) + 1) * d);
            dist.push_back(eval::cosine_distance(a, b));
            human.push_back(p.score);
        }
        if (dist.size() < 2) return std::nullopt;
        return eval::ssimi_score(dist, human);
    };

    int sel_layer = static_cast<int>(layer_key);
    int sel_pool = pooling_key == "max" ? 1 : pooling_key == "min" ? 2 : 0;
    json grid = json::array();

    if (auto_select) {
        std::map<Cell, TensorF> embs = embed_cells(lmm, toks, recs, full_grid(lmm.cfg.n_layers));
        std::vector<eval::GridCell> cells;
        for (const auto& [cell, mat] : embs) {
            std::optional<double> s = all_ssimi(dev_pairs, embs, cell);
            if (!s) throw std::invalid_argument("dev_pairs needs at least two pairs");
            cells.push_back({cell.first, cell.second, *s});
            grid.push_back({{"layer", cell.first},
                            {"pooling", kPoolingNames[cell.second]},
                            {"dev_ssimi", *s}});
        }
        eval::GridCell best = eval::select_layer_pooling(cells);
        sel_layer = best.layer;
        sel_pool = best.pooling;
        rep.metric("selection", json{{"dev_pairs", dev_pairs.pairs.size()}, {"dev_ssimi", best.score}});
    }
    if (sel_layer < 0 || sel_layer > lmm.cfg.n_layers)
        throw std::invalid_argument("layer must lie in [0, " + std::to_string(lmm.cfg.n_layers) + "]");

    Cell chosen{sel_layer, sel_pool};
    std::map<Cell, TensorF> embs = embed_cells(lmm, toks, recs, {chosen});

    json per_pair = json::array();
    std::optional<double> s_nat = subset_ssimi(pairs, "natural", embs, chosen, &per_pair);
    std::optional<double> s_syn = subset_ssimi(pairs, "synthetic", embs, chosen, &per_pair);
    std::optional<double> s_all = all_ssimi(pairs, embs, chosen);
    if (!s_all) throw std::invalid_argument("pairs needs at least two rows");

    if (!out_csv.empty()) {
        fs::path parent = fs::path(out_csv).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        std::ofstream f(out_csv);
        if (!f) throw std::runtime_error("cannot write " + out_csv);
        f << "word_a,word_b,subset,score,cosine_distance\n";
        for (const json& row : per_pair)
            f << row["word_a"].get<std::string>() << "," << row["word_b"].get<std::string>() << ","
              << row["subset"].get<std::string>() << "," << row["score"].get<double>() << ","
              << row["cosine_distance"].get<double>() << "\n";
        rep.output("csv", out_csv);
    }

    rep.metric("layer", sel_layer);
    rep.metric("pooling", kPoolingNames[sel_pool]);
    if (!grid.empty()) rep.metric("grid", grid);
    rep.metric("ssimi_all", *s_all);
    rep.metric("ssimi_natural", s_nat ? json(*s_nat) : json());
    rep.metric("ssimi_synthetic", s_syn ? json(*s_syn) : json());
    rep.metric("n_pairs", pairs.pairs.size());
    rep.metric("n_words", wav_list.size());
    return rep.done();
}

json cmd_ablate_vocab(const json& raw) {
    Config cfg(raw);
    const std::string manifest = cfg.require_str("manifest");
    const std::string out_dir = cfg.require_str("out_dir");
    const std::string train_split = cfg.str("train_split", "train");
    const std::string eval_split = cfg.str("eval_split", "test");
    const std::string fold_key = cfg.str("fold", "none");
    const std::string preset = cfg.str("preset", "tiny");
    const json model_overrides = cfg.object("model");
    const long steps = cfg.integer("steps", 2000);
    const long batch_clips = cfg.integer("batch_clips", 1);
    const long clip_samples = cfg.integer("clip_samples", dsp::kClipSamples);
    const double peak_lr = cfg.number("peak_lr", 1e-3);
    const long warmup = cfg.integer("warmup_steps", std::min(100L, steps / 10));
    const double entropy_weight = cfg.number("entropy_weight", 0.001);
    const uint64_t seed = cfg.seed();
    cfg.finish();

    Report rep("ablate-vocab", cfg);
    rep.input(manifest);
    eval::LabeledSpanDataset ds = eval::load_span_dataset(manifest);
    std::vector<const eval::Utterance*> train_utts = ds.split(train_split);
    std::vector<const eval::Utterance*> eval_utts = ds.split(eval_split);
    if (train_utts.empty()) throw std::invalid_argument("split '" + train_split + "' has no utterances");
    if (eval_utts.empty())
        throw std::invalid_argument("split '" + eval_split +
                                    "' has no labeled utterances; purity needs one");
    hash_utterance_inputs(rep, train_utts);
    hash_utterance_inputs(rep, eval_utts);
    std::optional<eval::PhonemeFold> fold = make_fold(fold_key);
    if (fold_key != "none" && fold_key != "standard") rep.input(fold_key);

    // identical clip stream for every variant: same paths, same order, same
    // sampler seed; the hash proves it in the report
    std::vector<std::string> train_paths;
    for (const eval::Utterance* u : train_utts) train_paths.push_back(u->wav_path);
    uint64_t order_hash = 1469598103934665603ull;
    for (const std::string& p : train_paths) order_hash = fnv1a64(p.data(), p.size(), order_hash);

    fs::create_directories(out_dir);
    const std::array<int, 3> bit_widths{12, 13, 14};
    json variants = json::array();
    std::vector<double> l2s, usages, purities;
    std::vector<long> vocabs;

    if (preset != "tiny" && preset != "full")
        throw std::invalid_argument("preset must be tiny or full, got " + preset);
    for (int bits : bit_widths) {
        wavcoch::WavCochConfig base =
            preset == "tiny" ? wavcoch::WavCochConfig::tiny() : wavcoch::WavCochConfig{};
        json mj = wavcoch::wavcoch_config_to_json(base);
        mj.update(model_overrides);
        mj["bit_width"] = bits;

        wavcoch::WavCochTrainConfig tc;
        tc.model = wavcoch::wavcoch_config_from_json(mj);
        tc.wav_paths = train_paths;
        tc.clip_samples = static_cast<int>(clip_samples);
        tc.steps = steps;
        tc.batch_clips = static_cast<int>(batch_clips);
        tc.sched.peak_lr = peak_lr;
        tc.sched.warmup_steps = warmup;
        tc.sched.total_steps = steps;
        tc.entropy_weight = entropy_weight;
        tc.seed = seed;
        tc.checkpoint_path = (fs::path(out_dir) / ("wavcoch_b" + std::to_string(bits) + ".ckpt")).string();

        wavcoch::WavCochModel model;
        wavcoch::WavCochTrainStats st = wavcoch::train_wavcoch(tc, model);

        // held-out reconstruction error in target space
        double sq_sum = 0.0;
        long n_cells = 0;
        std::vector<wavcoch::TokenStream> toks;
        for (const eval::Utterance* u : eval_utts) {
            audio::Waveform w = load_wav_16k(u->wav_path);
            TensorF target = wavcoch::target_frames(model.cfg, w);  // [T, rows]
            wavcoch::TokenStream t = wavcoch::tokenize(model, w);
            dsp::Spectrogram recon = wavcoch::detokenize(model, t);  // [rows, T]
            const int T = target.rows(), R = target.cols();
            if (recon.cols != T || recon.rows != R) throw std::runtime_error("reconstruction shape mismatch");
            for (int t_i = 0; t_i < T; ++t_i)
                for (int r = 0; r < R; ++r) {
                    double d = static_cast<double>(target.v[static_cast<size_t>(t_i) * R + r]) -
                               recon.at(r, t_i);
                    sq_sum += d * d;
                    ++n_cells;
                }
            toks.push_back(std::move(t));
        }
        double l2 = sq_sum / n_cells;

        std::vector<const wavcoch::TokenStream*> ptrs;
        for (const auto& t : toks) ptrs.push_back(&t);
        wavcoch::CodebookStats stats = wavcoch::codebook_stats(ptrs, bits);

        LabeledFrames lf = collect_labeled_frames(eval_utts, toks, fold);
        if (lf.tokens.empty()) throw std::invalid_argument("no labeled frames in the evaluation split");
        std::vector<std::string> classes = fold ? fold->classes() : sorted_classes(lf.labels);
        eval::PurityResult pr = eval::token_purity(lf.tokens, label_ids(lf.labels, classes),
                                                   1 << bits, static_cast<int>(classes.size()));

        variants.push_back({{"bits", bits},
                            {"vocab", 1 << bits},
                            {"l2", l2},
                            {"usage", stats.usage},
                            {"purity", pr.mean},
                            {"train_loss", st.loss},
                            {"clip_order_hash", hash_hex(order_hash)},
                            {"ckpt", tc.checkpoint_path}});
        l2s.push_back(l2);
        usages.push_back(stats.usage);
        purities.push_back(pr.mean);
        vocabs.push_back(1 << bits);
        rep.output("ckpt_b" + std::to_string(bits), tc.checkpoint_path);
    }

    // all variants consumed the same stream by construction; make it visible
    for (const json& v : variants)
        if (v["clip_order_hash"] != variants[0]["clip_order_hash"])
            throw std::runtime_error("clip ordering diverged between variants");

    const std::string csv_path = (fs::path(out_dir) / "ablation.csv").string();
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot write " + csv_path);
    f << "bits,vocab,l2,usage,purity\n";
    for (const json& v : variants)
        f << v["bits"].get<int>() << "," << v["vocab"].get<long>() << "," << v["l2"].get<double>()
          << "," << v["usage"].get<double>() << "," << v["purity"].get<double>() << "\n";
    f.close();
    rep.output("csv", csv_path);

    const std::string plot_path = (fs::path(out_dir) / "ablation_plot.json").string();
    json plot{{"x", vocabs},
              {"x_label", "vocabulary size"},
              {"left_axis", {{"label", "held-out reconstruction L2"}, {"values", l2s}}},
              {"right_axis",
               {{"label", "fraction"},
                {"series", {{"codebook_usage", usages}, {"cluster_purity", purities}}}}}};
    std::ofstream pf(plot_path);
    if (!pf) throw std::runtime_error("cannot write " + plot_path);
    pf << plot.dump(2) << "\n";
    pf.close();
    rep.output("plot", plot_path);

    rep.metric("variants", variants);
    rep.metric("clip_order_hash", hash_hex(order_hash));
    rep.metric("l2_decreases_with_vocab", l2s[0] >= l2s[1] && l2s[1] >= l2s[2]);
    return rep.done();
}

json cmd_rollout_figure(const json& raw) {
    Config cfg(raw);
    const std::string wavcoch_path = cfg.require_str("wavcoch");
    const std::string lm_path = cfg.require_str("lm");
    const std::string in = cfg.require_str("in");
    const std::string out_dir = cfg.require_str("out_dir");
    const double cut_seconds = cfg.number("cut_seconds", -1.0);
    const long n_seeds = cfg.integer("n_seeds", 3);
    long n_new = cfg.integer("n_new", -1);
    const double temp = cfg.number("temp", 1.0);
    const long topk = cfg.integer("topk", 0);
    const uint64_t seed = cfg.seed();
    const bool do_invert = cfg.flag("invert", true);
    const long invert_steps = cfg.integer("invert_steps", 200);
    const double invert_lr = cfg.number("invert_lr", 1e-2);
    cfg.finish();
    if (n_seeds < 1) throw std::invalid_argument("n_seeds must be positive");

    Report rep("rollout-figure", cfg);
    rep.input(wavcoch_path);
    rep.input(lm_path);
    rep.input(in);
    wavcoch::WavCochModel wc = wavcoch::wavcoch_from_checkpoint(load_checkpoint(wavcoch_path));
    lm::LmModel lmm = lm::lm_from_checkpoint(load_checkpoint(lm_path));
    if (lmm.cfg.vocab != wc.cfg.vocab())
        throw std::invalid_argument("tokenizer vocab does not match the model vocab");

    audio::Waveform w = load_wav_16k(in);
    const long n_samples = static_cast<long>(w.samples.size());
    wavcoch::TokenStream full = wavcoch::tokenize(wc, w);
    const long total = static_cast<long>(full.ids.size());

    const long cut_samples =
        cut_seconds < 0 ? n_samples / 2 : std::lround(cut_seconds * dsp::kSampleRate);
    const long cut = total * cut_samples / n_samples;  // token count scales with the sample cut
    if (cut < 1 || cut >= total)
        throw std::invalid_argument("cut must leave tokens on both sides, got " + std::to_string(cut));
    if (n_new < 0) n_new = total - cut;

    fs::create_directories(out_dir);

    // ground-truth panel in the tokenizer's own target space
    TensorF gt_frames = wavcoch::target_frames(wc.cfg, w);  // [T, rows]
    dsp::Spectrogram gt = dsp::from_frames_major(gt_frames.v, gt_frames.rows(), gt_frames.cols());

    // one normalization for every panel so prompt pixels match exactly
    float lo = gt.v[0], hi = gt.v[0];
    for (float v : gt.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0f;
    auto render = [&](const dsp::Spectrogram& s, const std::string& path) {
        std::vector<uint8_t> px(static_cast<size_t>(s.rows) * s.cols);
        for (int r = 0; r < s.rows; ++r)
            for (int c = 0; c < s.cols; ++c) {
                float u = (s.at(s.rows - 1 - r, c) - lo) / (hi - lo);  // low channels at the bottom
                px[static_cast<size_t>(r) * s.cols + c] =
                    static_cast<uint8_t>(std::lround(std::clamp(u, 0.0f, 1.0f) * 255.0f));
            }
        if (cut < s.cols)  // white marker column at the prompt boundary
            for (int r = 0; r < s.rows; ++r) px[static_cast<size_t>(r) * s.cols + cut] = 255;
        write_pgm(path, s.rows, s.cols, px);
    };

    const std::string gt_pgm = (fs::path(out_dir) / "gt.pgm").string();
    const std::string gt_wav = (fs::path(out_dir) / "gt.wav").string();
    render(gt, gt_pgm);
    audio::save_wav(gt_wav, w);
    rep.output("gt_pgm", gt_pgm);
    rep.output("gt_wav", gt_wav);

    std::vector<uint16_t> prompt(full.ids.begin(), full.ids.begin() + cut);
    json panels = json::array();
    for (long k = 0; k < n_seeds; ++k) {
        std::vector<uint16_t> ids =
            lm::generate(lmm, prompt, static_cast<int>(n_new), temp, static_cast<int>(topk), seed + k);
        wavcoch::TokenStream stream = full;
        stream.ids = ids;
        dsp::Spectrogram dec = wavcoch::detokenize(wc, stream);

        const std::string tag = "seed" + std::to_string(seed + k);
        const std::string pgm_path = (fs::path(out_dir) / (tag + ".pgm")).string();
        render(dec, pgm_path);
        rep.output(tag + "_pgm", pgm_path);
        json panel{{"seed", seed + k}, {"pgm", pgm_path}, {"tokens", ids.size()}};

        if (do_invert) {
            inversion::InversionConfig ic;
            ic.steps = invert_steps;
            ic.lr = invert_lr;
            ic.seed = seed + k;
            ic.target = wc.cfg.target;
            inversion::InversionResult res = inversion::invert_cochleagram(dec, ic);
            const std::string wav_path = (fs::path(out_dir) / (tag + ".wav")).string();
            audio::save_wav(wav_path, res.wav);
            rep.output(tag + "_wav", wav_path);
            panel["wav"] = wav_path;
            panel["inversion_final_loss"] = res.final_loss();
        }
        panels.push_back(panel);
    }

    rep.metric("panels", panels);
    rep.metric("total_tokens", total);
    rep.metric("cut_tokens", cut);
    rep.metric("n_new", n_new);
    rep.metric("rows", gt.rows);
    return rep.done();
}

json run_command(const std::string& command, const json& cfg) {
    if (command == "synth-corpus") return cmd_synth_corpus(cfg);
    if (command == "cochgram") return cmd_cochgram(cfg);
    if (command == "tokenize") return cmd_tokenize(cfg);
    if (command == "detokenize") return cmd_detokenize(cfg);
    if (command == "invert") return cmd_invert(cfg);
    if (command == "wavcoch-train") return cmd_wavcoch_train(cfg);
    if (command == "lm-train") return cmd_lm_train(cfg);
    if (command == "generate") return cmd_generate(cfg);
    if (command == "purity") return cmd_purity(cfg);
    if (command == "probe") return cmd_probe(cfg);
    if (command == "ssimi") return cmd_ssimi(cfg);
    if (command == "ablate-vocab") return cmd_ablate_vocab(cfg);
    if (command == "rollout-figure") return cmd_rollout_figure(cfg);
    throw std::invalid_argument("unknown command: " + command);
}

}  // namespace coch::pipeline
