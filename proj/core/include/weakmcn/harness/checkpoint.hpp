#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "weakmcn/numcore/params.hpp"

namespace weakmcn::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: magic "WMCNCKPT", u32 version, u32 tensor count, then per
// tensor a length-prefixed name, u32 rank, u32 extents and little-endian f32
// values.
std::vector<std::uint8_t> encode_checkpoint(const nc::ParamStore& params);
nc::ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Every value rounded through float32, as a checkpoint would store it.
nc::ParamStore round_to_f32(const nc::ParamStore& params);

// Writes `<path>` and the manifest `<path>.json` ({version, tensors: [{name,
// shape}], meta}). `meta_json` is embedded verbatim when it is a JSON object.
void save_checkpoint(const nc::ParamStore& params, const std::filesystem::path& path,
                     const std::string& meta_json = "{}");
nc::ParamStore load_checkpoint(const std::filesystem::path& path);
// The `meta` object from the manifest as JSON text.
std::string load_checkpoint_meta(const std::filesystem::path& path);

}  // namespace weakmcn::harness
