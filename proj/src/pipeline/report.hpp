#pragma once
// Command plumbing: a strict JSON config reader (unknown keys are errors,
// every consumed key echoes its resolved value) and the common report
// skeleton every command emits — command name, schema version, resolved
// config, seed, input content hashes, output paths, and metrics.

#include <cstdint>
#include <json.hpp>
#include <set>
#include <string>

namespace coch::pipeline {

using json = nlohmann::json;

class Config {
public:
    explicit Config(const json& j);

    std::string str(const std::string& key, const std::string& def);
    std::string require_str(const std::string& key);
    long integer(const std::string& key, long def);
    double number(const std::string& key, double def);
    bool flag(const std::string& key, bool def);
    json object(const std::string& key);  // nested object, default {}
    uint64_t seed(uint64_t def = 0) { return static_cast<uint64_t>(integer("seed", static_cast<long>(def))); }

    void finish() const;  // rejects keys that no getter consumed
    const json& resolved() const { return resolved_; }

private:
    const json& key_type_check(const std::string& key, const char* want, bool (json::*pred)() const);
    json in_;
    json resolved_ = json::object();
    std::set<std::string> seen_;
};

class Report {
public:
    Report(const std::string& command, const Config& cfg);

    void input(const std::string& path);  // fingerprints the file's bytes
    void output(const std::string& key, const std::string& path);
    void metric(const std::string& key, const json& value);
    json& metrics() { return j_["metrics"]; }
    json done();

private:
    json j_;
};

}  // namespace coch::pipeline
