#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dadet/tensor.hpp"

namespace dadet {

// Binary archive layout (little-endian):
//   magic "DADETCKP" | u32 version | u32 kind | u64 config length | config JSON
//   u32 group count, then per group:
//     u32 name length | name | u32 tensor count, then per tensor:
//       u32 name length | name | 4 x u32 NCHW extent | doubles
inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'D', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { Training = 1, Inference = 2 };

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct ParameterGroup {
    std::string name;  // "backbone", "neck", "head" or "dan"
    std::vector<NamedTensor> tensors;
};

struct Checkpoint {
    CheckpointKind kind = CheckpointKind::Training;
    nlohmann::json config;
    std::vector<ParameterGroup> groups;

    const ParameterGroup* group(const std::string& name) const;
    // Throws LoadError("... missing parameter group '<name>'").
    const ParameterGroup& require_group(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source_name);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Detector groups only; the domain classifier is dropped.
Checkpoint export_inference_model(const Checkpoint& ckpt);

}  // namespace dadet
