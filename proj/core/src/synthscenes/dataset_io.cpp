#include "weakmcn/synthscenes/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "weakmcn/error.hpp"

namespace weakmcn::scenes {

namespace {

constexpr char kMagic[8] = {'W', 'G', 'L', 'D', 'S', 'E', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) throw ParseError(std::string("truncated input while reading ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_bytes(const void* p, std::size_t n, const char* what) {
    need(n, what);
    if (std::memcmp(in_.data() + pos_, p, n) != 0) throw ParseError(std::string("bad ") + what, pos_);
    pos_ += n;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json config_json(const GeneratorConfig& c) {
  nlohmann::ordered_json j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["min_objects"] = c.min_objects;
  j["max_objects"] = c.max_objects;
  j["train_fraction"] = c.train_fraction;
  j["val_fraction"] = c.val_fraction;
  j["positional_prob"] = c.positional_prob;
  j["max_attempts"] = c.max_attempts;
  return j;
}

GeneratorConfig config_from(const nlohmann::json& j) {
  GeneratorConfig c;
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.min_objects = j.at("min_objects").get<std::size_t>();
  c.max_objects = j.at("max_objects").get<std::size_t>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.positional_prob = j.at("positional_prob").get<double>();
  c.max_attempts = j.at("max_attempts").get<std::size_t>();
  return c;
}

void write_mask(Writer& w, const Mask& m) {
  std::uint8_t acc = 0;
  std::size_t n = 0;
  for (auto b : m.bits) {
    if (b) acc |= static_cast<std::uint8_t>(1u << (n % 8));
    if (++n % 8 == 0) {
      w.u8(acc);
      acc = 0;
    }
  }
  if (n % 8) w.u8(acc);
}

Mask read_mask(Reader& r, std::size_t h, std::size_t w) {
  Mask m(h, w);
  const std::size_t n = h * w;
  r.need((n + 7) / 8, "mask");
  std::uint8_t acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k % 8 == 0) acc = r.u8("mask");
    m.bits[k] = (acc >> (k % 8)) & 1u;
  }
  return m;
}

void write_pair(Writer& w, const Pair& p) {
  const Scene& s = p.scene;
  w.u32(static_cast<std::uint32_t>(s.height));
  w.u32(static_cast<std::uint32_t>(s.width));
  w.u64(s.seed);
  for (float v : s.image) w.f32(v);
  w.u32(static_cast<std::uint32_t>(s.objects.size()));
  for (const auto& o : s.objects) {
    w.u8(static_cast<std::uint8_t>(o.shape));
    w.u8(static_cast<std::uint8_t>(o.color));
    w.u8(static_cast<std::uint8_t>(o.size));
    w.f32(static_cast<float>(o.gt_box.x));
    w.f32(static_cast<float>(o.gt_box.y));
    w.f32(static_cast<float>(o.gt_box.w));
    w.f32(static_cast<float>(o.gt_box.h));
    write_mask(w, o.gt_mask);
  }
  w.u32(static_cast<std::uint32_t>(p.expression.tokens.size()));
  for (auto t : p.expression.tokens) w.u32(t);
  w.u32(static_cast<std::uint32_t>(p.expression.target_index));
}

Pair read_pair(Reader& r) {
  Pair p;
  Scene& s = p.scene;
  s.height = r.u32("scene height");
  s.width = r.u32("scene width");
  if (s.height == 0 || s.width == 0 || s.height > 4096 || s.width > 4096) {
    throw ParseError("implausible scene extents", r.offset());
  }
  s.seed = r.u64("scene seed");
  const std::size_t n = s.height * s.width * 3;
  r.need(n * 4, "image");
  s.image.resize(n);
  for (auto& v : s.image) v = r.f32("image");
  const std::uint32_t n_obj = r.u32("object count");
  if (n_obj > 64) throw ParseError("implausible object count", r.offset());
  for (std::uint32_t k = 0; k < n_obj; ++k) {
    ObjectRecord o;
    const auto shape = r.u8("shape");
    const auto color = r.u8("color");
    const auto size = r.u8("size class");
    if (shape >= kNumShapes || color >= kNumColors || size >= kNumSizes) {
      throw ParseError("object attribute out of range", r.offset());
    }
    o.shape = static_cast<ShapeKind>(shape);
    o.color = static_cast<Color>(color);
    o.size = static_cast<SizeClass>(size);
    o.gt_box.x = r.f32("box");
    o.gt_box.y = r.f32("box");
    o.gt_box.w = r.f32("box");
    o.gt_box.h = r.f32("box");
    o.gt_mask = read_mask(r, s.height, s.width);
    s.objects.push_back(std::move(o));
  }
  const std::uint32_t n_tok = r.u32("token count");
  if (n_tok == 0 || n_tok > kMaxExpressionLength) throw ParseError("bad token count", r.offset());
  for (std::uint32_t k = 0; k < n_tok; ++k) {
    const auto t = r.u32("token");
    if (t >= kVocabSize) throw ParseError("token id outside vocabulary", r.offset());
    p.expression.tokens.push_back(t);
  }
  p.expression.target_index = r.u32("target index");
  if (p.expression.target_index >= s.objects.size()) throw ParseError("target index out of range", r.offset());
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.str(kDatasetVersion);
  nlohmann::ordered_json header;
  header["version"] = std::string(kDatasetVersion);
  header["seed"] = ds.seed;
  header["config"] = config_json(ds.config);
  header["counts"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};
  w.str(header.dump());
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& p : *split) write_pair(w, p);
  }
  return w.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect_bytes(kMagic, sizeof kMagic, "magic");
  const std::string version = r.str("version tag");
  if (version != kDatasetVersion) {
    throw VersionError("unknown dataset version tag '" + version + "' (expected '" + std::string(kDatasetVersion) +
                       "')");
  }
  const std::size_t header_at = r.offset();
  const std::string header_text = r.str("header");
  nlohmann::json header;
  Dataset ds;
  std::size_t counts[3];
  try {
    header = nlohmann::json::parse(header_text);
    if (header.at("version").get<std::string>() != kDatasetVersion) throw VersionError("header version mismatch");
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.config = config_from(header.at("config"));
    counts[0] = header.at("counts").at("train").get<std::size_t>();
    counts[1] = header.at("counts").at("val").get<std::size_t>();
    counts[2] = header.at("counts").at("test").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), header_at);
  }
  std::vector<Pair>* splits[3] = {&ds.train, &ds.val, &ds.test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k) splits[s]->push_back(read_pair(r));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last record", r.offset());
  return ds;
}

std::filesystem::path vocab_sidecar_path(const std::filesystem::path& dataset_path) {
  return std::filesystem::path(dataset_path.string() + ".vocab.json");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  std::ofstream side(vocab_sidecar_path(path), std::ios::trunc);
  side << vocab_json();
  if (!side) throw std::runtime_error("write failed for " + vocab_sidecar_path(path).string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace weakmcn::scenes
