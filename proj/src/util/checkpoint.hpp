#pragma once
// Single-file checkpoint container shared by both models:
//   "CKPT" magic, u16 version, u32 manifest length, manifest JSON (kind,
//   config echo, step, rng state, tensor names+shapes, optimizer flag,
//   free-form meta), then raw f32 little-endian blobs: all parameter tensors
//   in manifest order, then optimizer first/second moments when present.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/optim.hpp"
#include "core/tensor.hpp"

namespace coch {

struct Checkpoint {
    std::string kind;          // "wavcoch" | "auristream"
    nlohmann::json config;     // model + training config echo
    long step = 0;
    std::string rng_state;     // RandomSource::serialize(), empty if absent
    std::vector<Param> tensors;
    bool has_optimizer = false;
    AdamWState opt;            // moments aligned with tensors when present
    nlohmann::json meta;       // anything else (corpus hash, final loss, ...)
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace coch
