#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <queue>

#include "weakmcn/error.hpp"
#include "weakmcn/synthscenes/dataset_io.hpp"
#include "weakmcn/synthscenes/scene.hpp"
#include "weakmcn/synthscenes/vocab.hpp"

using namespace weakmcn;
using namespace weakmcn::scenes;

namespace {

const Dataset& corpus() {
  static const Dataset ds = generate(7, 1000, GeneratorConfig{});
  return ds;
}

std::vector<const Pair*> all_pairs(const Dataset& ds) {
  std::vector<const Pair*> out;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& p : *split) out.push_back(&p);
  return out;
}

// Independent matcher: attribute tokens filter, then a positional word picks
// the extreme box centre among survivors with ties to the lowest index.
std::vector<std::size_t> brute_matches(const Scene& s, const std::vector<std::uint32_t>& tokens) {
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    bool ok = true;
    for (auto t : tokens) {
      if (t < kShapeBase) ok = ok && t == static_cast<std::uint32_t>(o.color);
      else if (t < kSizeBase) ok = ok && t - kShapeBase == static_cast<std::uint32_t>(o.shape);
      else if (t < kPositionBase) ok = ok && t - kSizeBase == static_cast<std::uint32_t>(o.size);
    }
    if (ok) cand.push_back(i);
  }
  for (auto t : tokens) {
    if (t < kPositionBase || cand.empty()) continue;
    auto key = [&](std::size_t i) {
      const auto& b = s.objects[i].gt_box;
      const double cx = b.x + b.w / 2, cy = b.y + b.h / 2;
      switch (t - kPositionBase) {
        case 0: return cx;
        case 1: return -cx;
        case 2: return cy;
        case 3: return -cy;
        default: {
          const double dx = cx - s.width / 2.0, dy = cy - s.height / 2.0;
          return dx * dx + dy * dy;
        }
      }
    };
    std::size_t best = cand[0];
    for (auto i : cand)
      if (key(i) < key(best)) best = i;
    cand = {best};
  }
  return cand;
}

std::size_t components(const Mask& m) {
  std::vector<int> seen(m.bits.size(), 0);
  std::size_t n = 0;
  for (std::size_t start = 0; start < m.bits.size(); ++start) {
    if (!m.bits[start] || seen[start]) continue;
    ++n;
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const std::size_t p = q.front();
      q.pop();
      const long i = long(p / m.width), j = long(p % m.width);
      const long di[] = {-1, 1, 0, 0}, dj[] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const long a = i + di[k], b = j + dj[k];
        if (a < 0 || b < 0 || a >= long(m.height) || b >= long(m.width)) continue;
        const std::size_t q2 = std::size_t(a) * m.width + std::size_t(b);
        if (m.bits[q2] && !seen[q2]) {
          seen[q2] = 1;
          q.push(q2);
        }
      }
    }
  }
  return n;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "weakmcn_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Vocab, TokenTable) {
  EXPECT_EQ(kVocabSize, 19u);
  EXPECT_EQ(token_id("red"), token_of(Color::kRed));
  EXPECT_EQ(token_id("leftmost"), token_of(Position::kLeftmost));
  EXPECT_FALSE(token_id("purple").has_value());
  EXPECT_THROW(token_info(kVocabSize), std::out_of_range);
  for (std::uint32_t id = 0; id < kVocabSize; ++id) EXPECT_EQ(token_id(token_info(id).word), id);
}

TEST(Generate, DeterministicBytes) {
  const auto a = encode_dataset(generate(7, 10, GeneratorConfig{}));
  const auto b = encode_dataset(generate(7, 10, GeneratorConfig{}));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, encode_dataset(generate(8, 10, GeneratorConfig{})));
}

TEST(Generate, SplitsAndCounts) {
  GeneratorConfig cfg;
  cfg.val_fraction = 0.1;
  const auto ds = generate(3, 50, cfg);
  EXPECT_EQ(ds.size(), 50u);
  EXPECT_EQ(ds.train.size(), 40u);
  EXPECT_EQ(ds.val.size(), 5u);
  EXPECT_EQ(ds.test.size(), 5u);
  EXPECT_THROW(ds.split("dev"), std::invalid_argument);
}

TEST(Generate, RejectsBadConfig) {
  GeneratorConfig cfg;
  cfg.min_objects = 1;
  EXPECT_THROW(generate(1, 5, cfg), ConfigError);
  cfg = {};
  cfg.max_objects = 6;
  EXPECT_THROW(generate(1, 5, cfg), ConfigError);
  EXPECT_THROW(generate(1, 0, GeneratorConfig{}), ConfigError);
}

TEST(Generate, MinObjectsHonoured) {
  for (const auto* p : all_pairs(corpus())) {
    EXPECT_GE(p->scene.objects.size(), 2u);
    EXPECT_LE(p->scene.objects.size(), 5u);
  }
}

// Property: every expression refers to exactly one object (independent matcher).
TEST(Properties, ReferentialUniqueness) {
  for (const auto* p : all_pairs(corpus())) {
    const auto m = brute_matches(p->scene, p->expression.tokens);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0], p->expression.target_index);
    EXPECT_LE(p->expression.tokens.size(), kMaxExpressionLength);
    EXPECT_FALSE(p->expression.tokens.empty());
  }
}

TEST(Resolve, AgreesWithStoredTarget) {
  std::size_t n = 0;
  for (const auto* p : all_pairs(corpus())) {
    EXPECT_EQ(resolve(p->expression, p->scene), p->expression.target_index);
    ++n;
  }
  EXPECT_GE(n, 1000u);
}

TEST(Resolve, ColorShapeAndLeftmost) {
  Scene s;
  s.height = s.width = 32;
  s.image.assign(32 * 32 * 3, 0.f);
  auto obj = [](ShapeKind k, Color c, double x) {
    ObjectRecord o;
    o.shape = k;
    o.color = c;
    o.gt_box = Box{x, 4, 4, 4};
    return o;
  };
  s.objects = {obj(ShapeKind::kEllipse, Color::kBlue, 20), obj(ShapeKind::kRectangle, Color::kRed, 10),
               obj(ShapeKind::kEllipse, Color::kGreen, 2), obj(ShapeKind::kRectangle, Color::kBlue, 0)};
  EXPECT_EQ(resolve({{token_of(Color::kRed), token_of(ShapeKind::kRectangle)}, 1}, s), 1u);
  EXPECT_EQ(resolve({{token_of(Position::kLeftmost), token_of(ShapeKind::kEllipse)}, 2}, s), 2u);
  EXPECT_THROW(resolve({{token_of(Color::kBlue)}, 0}, s), IntegrityError);
  EXPECT_THROW(resolve({{token_of(Color::kYellow)}, 0}, s), IntegrityError);
}

// Property: object and mask invariants on every generated scene.
TEST(Properties, ObjectInvariants) {
  for (const auto* p : all_pairs(corpus())) {
    const auto& s = p->scene;
    ASSERT_EQ(s.image.size(), s.height * s.width * 3);
    for (float v : s.image) ASSERT_TRUE(v >= 0.f && v <= 1.f);
    for (std::size_t a = 0; a < s.objects.size(); ++a) {
      const auto& o = s.objects[a];
      // Tight box; also implies the object lies inside the image.
      EXPECT_EQ(o.gt_box, tight_box(o.gt_mask));
      EXPECT_EQ(components(o.gt_mask), 1u);
      EXPECT_EQ(o.size, size_class_for(o.gt_mask.count(), s.height * s.width));
      for (std::size_t b = a + 1; b < s.objects.size(); ++b) {
        const auto& q = s.objects[b];
        std::size_t inter = 0;
        for (std::size_t i = 0; i < o.gt_mask.bits.size(); ++i) inter += o.gt_mask.bits[i] && q.gt_mask.bits[i];
        EXPECT_LE(double(inter), 0.2 * double(std::min(o.gt_mask.count(), q.gt_mask.count())));
      }
    }
  }
}

// Property: shrinking any side of a gt box by one pixel loses a mask pixel.
TEST(Properties, BoxTightness) {
  for (const auto* p : all_pairs(corpus())) {
    for (const auto& o : p->scene.objects) {
      const auto& b = o.gt_box;
      const std::size_t x0 = std::size_t(b.x), y0 = std::size_t(b.y), x1 = x0 + std::size_t(b.w) - 1,
                        y1 = y0 + std::size_t(b.h) - 1;
      bool top = false, bottom = false, left = false, right = false;
      for (std::size_t j = x0; j <= x1; ++j) top |= o.gt_mask.at(y0, j) != 0, bottom |= o.gt_mask.at(y1, j) != 0;
      for (std::size_t i = y0; i <= y1; ++i) left |= o.gt_mask.at(i, x0) != 0, right |= o.gt_mask.at(i, x1) != 0;
      EXPECT_TRUE(top && bottom && left && right);
    }
  }
}

TEST(SizeBands, Boundaries) {
  EXPECT_EQ(size_class_for(0, 100), SizeClass::kSmall);
  EXPECT_EQ(size_class_for(5, 100), SizeClass::kSmall);
  EXPECT_EQ(size_class_for(6, 100), SizeClass::kMedium);
  EXPECT_EQ(size_class_for(15, 100), SizeClass::kMedium);
  EXPECT_EQ(size_class_for(16, 100), SizeClass::kLarge);
}

TEST(DatasetIO, RoundTrip) {
  const auto ds = generate(11, 12, GeneratorConfig{});
  const auto path = temp_path("roundtrip.wgl");
  save_dataset(ds, path);
  EXPECT_TRUE(std::filesystem::exists(vocab_sidecar_path(path)));
  EXPECT_EQ(load_dataset(path), ds);
}

TEST(DatasetIO, TruncatedFileIsParseError) {
  const auto bytes = encode_dataset(generate(11, 4, GeneratorConfig{}));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    try {
      decode_dataset(part);
      FAIL() << "no error at cut " << cut;
    } catch (const ParseError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
}

TEST(DatasetIO, UnknownVersionTag) {
  auto bytes = encode_dataset(generate(11, 2, GeneratorConfig{}));
  // Magic (8 bytes), then a length-prefixed version tag.
  std::vector<std::uint8_t> patched(bytes.begin(), bytes.begin() + 8);
  for (int b : {3, 0, 0, 0, int('v'), int('9'), int('9')}) patched.push_back(static_cast<std::uint8_t>(b));
  patched.insert(patched.end(), bytes.begin() + 16, bytes.end());
  EXPECT_THROW(decode_dataset(patched), VersionError);
}

TEST(DatasetIO, CorruptMagic) {
  auto bytes = encode_dataset(generate(11, 2, GeneratorConfig{}));
  bytes[0] ^= 0xff;
  EXPECT_THROW(decode_dataset(bytes), ParseError);
}
