#pragma once

#include <torch/torch.h>

#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace harmony {

// Checkpoint container: "HARMCKPT" magic, u32 format version, u64 header
// length, JSON header (tensor index plus free-form "meta"), then the raw
// little-endian tensor blob.
struct Checkpoint {
    std::map<std::string, torch::Tensor> tensors;
    nlohmann::json meta;
};

void save_checkpoint(const std::string& path, const std::map<std::string, torch::Tensor>& tensors,
                     const nlohmann::json& meta = nlohmann::json::object());

Checkpoint load_checkpoint(const std::string& path);

// Reads a .safetensors file (the published-weights interchange format).
// Supported dtypes: F32, F16, F64, I64, I32, BF16 (widened to F32).
std::map<std::string, torch::Tensor> load_safetensors(const std::string& path);

// Snapshot of a module's parameters and buffers as detached CPU clones.
std::map<std::string, torch::Tensor> state_tensors(const torch::nn::Module& m);

// Copies matching entries back into the module. With strict=true every
// parameter/buffer must be present and no extra keys may remain unused.
void load_state_tensors(torch::nn::Module& m, const std::map<std::string, torch::Tensor>& tensors,
                        bool strict = true);

}  // namespace harmony
