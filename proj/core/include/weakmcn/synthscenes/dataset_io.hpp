#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "weakmcn/synthscenes/scene.hpp"

namespace weakmcn::scenes {

inline constexpr std::string_view kDatasetVersion = "wgl1";

// Binary container: magic, version tag, JSON header (version, seed, config
// echo, split counts), then per-pair records with little-endian 32-bit float
// images and bit-packed masks.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
// Throws ParseError (with byte offset) or VersionError; never returns a
// partial dataset.
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

// Writes `path` and the vocabulary sidecar `path` + ".vocab.json".
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path vocab_sidecar_path(const std::filesystem::path& dataset_path);

}  // namespace weakmcn::scenes
