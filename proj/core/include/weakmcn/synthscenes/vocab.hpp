#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace weakmcn::scenes {

enum class ShapeKind : std::uint8_t { kRectangle, kEllipse, kTriangle };
enum class Color : std::uint8_t { kRed, kGreen, kBlue, kYellow, kCyan, kMagenta, kWhite, kOrange };
enum class SizeClass : std::uint8_t { kSmall, kMedium, kLarge };
enum class Position : std::uint8_t { kLeftmost, kRightmost, kTopmost, kBottommost, kCenter };

inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumColors = 8;
inline constexpr std::size_t kNumSizes = 3;
inline constexpr std::size_t kNumPositions = 5;

// Token ids: colors, then shapes, then sizes, then positional words.
inline constexpr std::uint32_t kColorBase = 0;
inline constexpr std::uint32_t kShapeBase = kColorBase + kNumColors;
inline constexpr std::uint32_t kSizeBase = kShapeBase + kNumShapes;
inline constexpr std::uint32_t kPositionBase = kSizeBase + kNumSizes;
inline constexpr std::uint32_t kVocabSize = kPositionBase + kNumPositions;

enum class TokenKind { kColor, kShape, kSize, kPosition };

struct TokenInfo {
  std::uint32_t id;
  std::string_view word;
  TokenKind kind;
  std::uint8_t value;  // enum value within its kind
};

// Throws std::out_of_range for ids >= kVocabSize.
TokenInfo token_info(std::uint32_t id);
std::optional<std::uint32_t> token_id(std::string_view word);
std::string_view kind_name(TokenKind kind);

inline std::uint32_t token_of(Color c) { return kColorBase + static_cast<std::uint32_t>(c); }
inline std::uint32_t token_of(ShapeKind s) { return kShapeBase + static_cast<std::uint32_t>(s); }
inline std::uint32_t token_of(SizeClass s) { return kSizeBase + static_cast<std::uint32_t>(s); }
inline std::uint32_t token_of(Position p) { return kPositionBase + static_cast<std::uint32_t>(p); }

// Nominal RGB of each named color, components in [0, 1].
std::array<float, 3> color_rgb(Color c);

// JSON vocabulary table written next to dataset files.
std::string vocab_json();

}  // namespace weakmcn::scenes
