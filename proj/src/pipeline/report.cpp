#include "pipeline/report.hpp"

#include <stdexcept>

#include "util/hash.hpp"

namespace coch::pipeline {

Config::Config(const json& j) : in_(j) {
    if (!in_.is_object()) throw std::invalid_argument("command config must be a JSON object");
}

const json& Config::key_type_check(const std::string& key, const char* want, bool (json::*pred)() const) {
    const json& v = in_.at(key);
    if (!(v.*pred)()) throw std::invalid_argument("config key '" + key + "' must be a " + want);
    seen_.insert(key);
    return v;
}

std::string Config::str(const std::string& key, const std::string& def) {
    std::string v = def;
    if (in_.contains(key)) v = key_type_check(key, "string", &json::is_string).get<std::string>();
    resolved_[key] = v;
    return v;
}

std::string Config::require_str(const std::string& key) {
    if (!in_.contains(key)) throw std::invalid_argument("config key '" + key + "' is required");
    return str(key, "");
}

long Config::integer(const std::string& key, long def) {
    long v = def;
    if (in_.contains(key)) v = key_type_check(key, "integer", &json::is_number_integer).get<long>();
    resolved_[key] = v;
    return v;
}

double Config::number(const std::string& key, double def) {
    double v = def;
    if (in_.contains(key)) v = key_type_check(key, "number", &json::is_number).get<double>();
    resolved_[key] = v;
    return v;
}

bool Config::flag(const std::string& key, bool def) {
    bool v = def;
    if (in_.contains(key)) v = key_type_check(key, "boolean", &json::is_boolean).get<bool>();
    resolved_[key] = v;
    return v;
}

json Config::object(const std::string& key) {
    json v = json::object();
    if (in_.contains(key)) v = key_type_check(key, "object", &json::is_object);
    resolved_[key] = v;
    return v;
}

void Config::finish() const {
    std::string unknown;
    for (auto it = in_.begin(); it != in_.end(); ++it)
        if (!seen_.count(it.key())) unknown += unknown.empty() ? it.key() : ", " + it.key();
    if (!unknown.empty()) throw std::invalid_argument("unknown config keys: " + unknown);
}

Report::Report(const std::string& command, const Config& cfg) {
    j_["command"] = command;
    j_["schema_version"] = 1;
    j_["status"] = "incomplete";
    j_["config"] = cfg.resolved();
    if (cfg.resolved().contains("seed")) j_["seed"] = cfg.resolved()["seed"];
    j_["input_hashes"] = json::object();
    j_["outputs"] = json::object();
    j_["metrics"] = json::object();
}

void Report::input(const std::string& path) { j_["input_hashes"][path] = file_hash_hex(path); }

void Report::output(const std::string& key, const std::string& path) { j_["outputs"][key] = path; }

void Report::metric(const std::string& key, const json& value) { j_["metrics"][key] = value; }

json Report::done() {
    j_["status"] = "ok";
    return j_;
}

}  // namespace coch::pipeline
