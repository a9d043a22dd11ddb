#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dbigan/nets.hpp"

namespace dbigan {

// Archive layout:
//   8 bytes   magic "DBGCKPT\0"
//   4 bytes   format version (uint32, little-endian)
//   8 bytes   header length in bytes (uint64, little-endian)
//   header    JSON: format_version, step, seed, networks (NetworkConfig set),
//             optimizer step counts, tensor index, caller-supplied "extra"
//   blocks    raw little-endian binary32 values, in tensor-index order
// Tensor names: "<net>/<param>", "<net>/adam.m/<param>", "<net>/adam.v/<param>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_filename(std::uint64_t step); // ckpt_{step:08d}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
    ModelState state;
    nlohmann::json extra;
};

// Throws IoError on missing or corrupt archives.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
// Header only, without reading parameter blocks.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

nlohmann::json to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

// True when every parameter and optimizer tensor matches bit for bit.
bool bitwise_equal(const ModelState& a, const ModelState& b);

} // namespace dbigan
