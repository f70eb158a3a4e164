#include "weakmcn/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "weakmcn/error.hpp"

namespace weakmcn::harness {

namespace {

constexpr char kMagic[8] = {'W', 'M', 'C', 'N', 'C', 'K', 'P', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::filesystem::path manifest_path(const std::filesystem::path& p) { return p.string() + ".json"; }

struct Cursor {
  const std::vector<std::uint8_t>& in;
  std::size_t pos = 0;

  std::uint32_t u32(const char* what) {
    if (in.size() - pos < 4) throw ParseError(std::string("truncated checkpoint while reading ") + what, pos);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const nc::ParamStore& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& name : params.names()) {
    const auto& t = params.get(name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (auto v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

nc::ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a checkpoint (bad magic)", 0);
  }
  Cursor c{bytes, sizeof kMagic};
  const auto version = c.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = c.u32("tensor count");
  nc::ParamStore out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = c.u32("name length");
    if (bytes.size() - c.pos < len) throw ParseError("truncated checkpoint name", c.pos);
    std::string name(reinterpret_cast<const char*>(bytes.data() + c.pos), len);
    c.pos += len;
    const auto rank = c.u32("rank");
    if (rank > 8) throw ParseError("implausible tensor rank", c.pos);
    nc::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(c.u32("extent"));
      if (shape.back() == 0) throw ParseError("zero tensor extent", c.pos);
      n *= shape.back();
    }
    if ((bytes.size() - c.pos) / 4 < n) throw ParseError("truncated tensor data for '" + name + "'", c.pos);
    std::vector<nc::Real> values(n);
    for (auto& v : values) v = static_cast<nc::Real>(std::bit_cast<float>(c.u32("value")));
    out.add(std::move(name), nc::Tensor(std::move(shape), std::move(values)));
  }
  if (c.pos != bytes.size()) throw ParseError("trailing bytes after last tensor", c.pos);
  return out;
}

nc::ParamStore round_to_f32(const nc::ParamStore& params) { return decode_checkpoint(encode_checkpoint(params)); }

void save_checkpoint(const nc::ParamStore& params, const std::filesystem::path& path, const std::string& meta_json) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_checkpoint(params);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  nlohmann::ordered_json m;
  m["version"] = kCheckpointVersion;
  m["tensors"] = nlohmann::ordered_json::array();
  for (const auto& name : params.names()) m["tensors"].push_back({{"name", name}, {"shape", params.get(name).shape()}});
  auto meta = nlohmann::ordered_json::parse(meta_json, nullptr, false);
  m["meta"] = meta.is_object() ? meta : nlohmann::ordered_json::object();
  std::ofstream man(manifest_path(path), std::ios::trunc);
  man << m.dump(2) << "\n";
  if (!man) throw std::runtime_error("write failed for " + manifest_path(path).string());
}

nc::ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string load_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(manifest_path(path));
  if (!in) return "{}";
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = nlohmann::ordered_json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.contains("meta")) return "{}";
  return j["meta"].dump();
}

}  // namespace weakmcn::harness
