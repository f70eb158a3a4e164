#include "weakmcn/synthscenes/vocab.hpp"

#include <stdexcept>

#include <json.hpp>

namespace weakmcn::scenes {

namespace {

constexpr std::array<std::string_view, kVocabSize> kWords = {
    "red",   "green",   "blue",  "yellow", "cyan",     "magenta",   "white",      "orange",
    "rectangle", "ellipse", "triangle",
    "small", "medium",  "large",
    "leftmost", "rightmost", "topmost", "bottommost", "center",
};

}  // namespace

TokenInfo token_info(std::uint32_t id) {
  if (id >= kVocabSize) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  if (id < kShapeBase) return {id, kWords[id], TokenKind::kColor, static_cast<std::uint8_t>(id - kColorBase)};
  if (id < kSizeBase) return {id, kWords[id], TokenKind::kShape, static_cast<std::uint8_t>(id - kShapeBase)};
  if (id < kPositionBase) return {id, kWords[id], TokenKind::kSize, static_cast<std::uint8_t>(id - kSizeBase)};
  return {id, kWords[id], TokenKind::kPosition, static_cast<std::uint8_t>(id - kPositionBase)};
}

std::optional<std::uint32_t> token_id(std::string_view word) {
  for (std::uint32_t i = 0; i < kVocabSize; ++i) {
    if (kWords[i] == word) return i;
  }
  return std::nullopt;
}

std::string_view kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::kColor: return "color";
    case TokenKind::kShape: return "shape";
    case TokenKind::kSize: return "size";
    case TokenKind::kPosition: return "position";
  }
  return "unknown";
}

std::array<float, 3> color_rgb(Color c) {
  switch (c) {
    case Color::kRed: return {0.90f, 0.10f, 0.10f};
    case Color::kGreen: return {0.10f, 0.80f, 0.15f};
    case Color::kBlue: return {0.15f, 0.25f, 0.95f};
    case Color::kYellow: return {0.95f, 0.90f, 0.10f};
    case Color::kCyan: return {0.10f, 0.85f, 0.90f};
    case Color::kMagenta: return {0.85f, 0.15f, 0.85f};
    case Color::kWhite: return {0.95f, 0.95f, 0.95f};
    case Color::kOrange: return {1.00f, 0.55f, 0.05f};
  }
  return {0, 0, 0};
}

std::string vocab_json() {
  nlohmann::ordered_json j;
  j["version"] = "wgl1";
  j["size"] = kVocabSize;
  auto& tokens = j["tokens"] = nlohmann::ordered_json::array();
  for (std::uint32_t i = 0; i < kVocabSize; ++i) {
    const auto info = token_info(i);
    tokens.push_back({{"id", i}, {"word", std::string(info.word)}, {"kind", std::string(kind_name(info.kind))}});
  }
  return j.dump(2) + "\n";
}

}  // namespace weakmcn::scenes
