#include "util/checkpoint.hpp"

#include <stdexcept>

#include "util/io.hpp"

namespace coch {

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    nlohmann::json manifest;
    manifest["kind"] = ck.kind;
    manifest["config"] = ck.config;
    manifest["step"] = ck.step;
    manifest["rng"] = ck.rng_state;
    manifest["meta"] = ck.meta;
    auto tensors = nlohmann::json::array();
    for (const auto& p : ck.tensors) tensors.push_back({{"name", p.name}, {"shape", p.t.shape}});
    manifest["tensors"] = std::move(tensors);
    manifest["optimizer"] = {{"present", ck.has_optimizer}, {"step", ck.opt.step}};

    if (ck.has_optimizer) {
        if (ck.opt.m.size() != ck.tensors.size() || ck.opt.v.size() != ck.tensors.size())
            throw std::invalid_argument("save_checkpoint: optimizer state does not match tensors");
        for (size_t i = 0; i < ck.tensors.size(); ++i)
            if (ck.opt.m[i].size() != ck.tensors[i].t.size() || ck.opt.v[i].size() != ck.tensors[i].t.size())
                throw std::invalid_argument("save_checkpoint: moment size mismatch at " + ck.tensors[i].name);
    }

    ByteWriter b;
    b.put_str("CKPT");
    b.put<uint16_t>(1);
    const std::string mj = manifest.dump();
    b.put<uint32_t>(static_cast<uint32_t>(mj.size()));
    b.put_str(mj);
    for (const auto& p : ck.tensors) b.put_bytes(p.t.v.data(), p.t.v.size() * sizeof(float));
    if (ck.has_optimizer) {
        for (const auto& m : ck.opt.m) b.put_bytes(m.data(), m.size() * sizeof(float));
        for (const auto& v : ck.opt.v) b.put_bytes(v.data(), v.size() * sizeof(float));
    }
    b.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.get_str(4) != "CKPT") throw std::runtime_error(path + ": not a checkpoint file");
    const uint16_t ver = r.get<uint16_t>();
    if (ver != 1) throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(ver));
    const uint32_t mlen = r.get<uint32_t>();
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(r.get_str(mlen));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": bad checkpoint manifest: " + e.what());
    }

    Checkpoint ck;
    ck.kind = manifest.at("kind").get<std::string>();
    ck.config = manifest.at("config");
    ck.step = manifest.at("step").get<long>();
    ck.rng_state = manifest.value("rng", std::string());
    ck.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& tj : manifest.at("tensors")) {
        Param p;
        p.name = tj.at("name").get<std::string>();
        p.t = TensorF(tj.at("shape").get<Shape>());
        r.get_bytes(p.t.v.data(), p.t.v.size() * sizeof(float));
        ck.tensors.push_back(std::move(p));
    }
    const auto& oj = manifest.at("optimizer");
    ck.has_optimizer = oj.at("present").get<bool>();
    if (ck.has_optimizer) {
        ck.opt.step = oj.at("step").get<long>();
        for (const auto& p : ck.tensors) {
            std::vector<float> m(p.t.size());
            r.get_bytes(m.data(), m.size() * sizeof(float));
            ck.opt.m.push_back(std::move(m));
        }
        for (const auto& p : ck.tensors) {
            std::vector<float> v(p.t.size());
            r.get_bytes(v.data(), v.size() * sizeof(float));
            ck.opt.v.push_back(std::move(v));
        }
    }
    if (r.remaining() != 0) throw std::runtime_error(path + ": trailing bytes in checkpoint");
    return ck;
}

}  // namespace coch
