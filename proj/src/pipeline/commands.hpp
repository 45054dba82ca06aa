#pragma once
// Every user-facing operation, expressed as config-in / report-out. Each
// command takes a JSON object, rejects keys it does not understand, never
// mutates its inputs, and returns a report embedding the resolved config,
// seed, and content hashes of everything it read — so a re-run from the
// report's config block reproduces the outputs bit-for-bit (single thread).

#include <json.hpp>
#include <string>

namespace coch::pipeline {

using json = nlohmann::json;

json cmd_synth_corpus(const json& cfg);
json cmd_cochgram(const json& cfg);
json cmd_tokenize(const json& cfg);
json cmd_detokenize(const json& cfg);
json cmd_invert(const json& cfg);

json cmd_wavcoch_train(const json& cfg);
json cmd_lm_train(const json& cfg);
json cmd_generate(const json& cfg);

json cmd_purity(const json& cfg);
json cmd_probe(const json& cfg);
json cmd_ssimi(const json& cfg);
json cmd_ablate_vocab(const json& cfg);
json cmd_rollout_figure(const json& cfg);

// Dispatch by command name; throws std::invalid_argument on unknown names.
json run_command(const std::string& command, const json& cfg);

}  // namespace coch::pipeline
