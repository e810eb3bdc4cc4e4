#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecgdx/nn/model.hpp"
#include "ecgdx/nn/optim.hpp"

namespace ecgdx::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::map<std::string, Tensor<float>>;

/// "ECKP", u32 version, u32 count, then per tensor: u32 name length, name
/// bytes, u8 rank, u32 dims, little-endian float32 values.
std::string encode_tensors(const NamedTensors& tensors);
/// Throws BadMagic, UnsupportedVersion or Io on truncated input.
NamedTensors decode_tensors(const std::string& bytes);

struct Checkpoint {
  ModelParams model;
  std::optional<AdamState<float>> adam;
};

NamedTensors checkpoint_tensors(const ModelParams& model, const AdamState<float>* adam = nullptr);
Checkpoint checkpoint_from_tensors(const NamedTensors& tensors);

void save_checkpoint(const ModelParams& model, const AdamState<float>* adam, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ecgdx::nn
