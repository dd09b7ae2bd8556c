#include "iotnat/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "iotnat/error.hpp"

namespace iotnat::iforest {

namespace {

constexpr char kMagic[8] = {'I', 'O', 'T', 'N', 'A', 'T', 'M', 'A'};
constexpr std::size_t kModelSectionOffset = sizeof kMagic + 4 + 8;
constexpr std::size_t kChecksumSize = 8;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void le(T value) {
    auto u = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void u8(std::uint8_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void i32(std::int32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void i64(std::int64_t v) { le(v); }
  void f64(double v) { le(v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void u32_list(const std::vector<std::uint32_t>& values) {
    u32(static_cast<std::uint32_t>(values.size()));
    for (auto v : values) u32(v);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

[[noreturn]] void corrupt(const std::string& what) { throw_data_error("corrupt-artifact", what); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) corrupt("truncated");
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::int32_t i32() { return std::bit_cast<std::int32_t>(le<std::uint32_t>()); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int64_t i64() { return std::bit_cast<std::int64_t>(le<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Bounds a count by the bytes left, so corrupt lengths cannot trigger
  // huge allocations.
  std::uint32_t count(std::size_t min_item_size) {
    const auto n = u32();
    if (std::size_t{n} * min_item_size > in_.size() - pos_) corrupt("bad count");
    return n;
  }
  std::vector<std::uint32_t> u32_list() {
    const auto n = count(4);
    std::vector<std::uint32_t> v(n);
    for (auto& x : v) x = u32();
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_model_section(Writer& w, const ModelArtifact& a) {
  w.str(a.model.str());
  w.u64(a.training_flow_count);
  w.f64(a.default_threshold);
  w.u32(static_cast<std::uint32_t>(a.calibrated_thresholds.size()));
  for (const auto& [p, th] : a.calibrated_thresholds) {
    w.i32(p);
    w.f64(th);
  }
  const auto& s = a.schema;
  for (const auto* r : {&s.in_bytes, &s.out_bytes, &s.flow_duration}) {
    w.f64(r->min);
    w.f64(r->max);
  }
  w.u32_list(s.protocols);
  w.u32_list(s.dst_ports);
  w.u32(static_cast<std::uint32_t>(s.l7_protos.size()));
  for (const auto& name : s.l7_protos) w.str(name);
  w.u32_list(s.src_tos);
  w.u32_list(s.dst_tos);

  const auto& f = a.forest;
  w.u64(f.subsample_size());
  w.u64(f.seed());
  w.u64(f.dimension());
  w.u32(static_cast<std::uint32_t>(f.trees().size()));
  for (const auto& t : f.trees()) {
    w.u32(static_cast<std::uint32_t>(t.height_limit()));
    w.u32(static_cast<std::uint32_t>(t.nodes().size()));
    for (const auto& n : t.nodes()) {
      if (n.external) {
        w.u8(0);
        w.u32(n.size);
      } else {
        w.u8(1);
        w.u32(n.dimension);
        w.f64(n.split_value);
        w.u32(n.right);
      }
    }
  }
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_artifact(const ModelArtifact& artifact) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(artifact.format_version);
  w.i64(artifact.trained_at_ms);
  write_model_section(w, artifact);
  w.u64(fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

ModelArtifact deserialize_artifact(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kModelSectionOffset + kChecksumSize) corrupt("truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) corrupt("bad magic");
  const auto body = bytes.first(bytes.size() - kChecksumSize);
  Reader trailer(bytes.last(kChecksumSize));
  if (trailer.u64() != fnv1a64(body)) corrupt("checksum mismatch");

  Reader r(body);
  r.need(sizeof kMagic);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  ModelArtifact a;
  a.format_version = r.u32();
  if (a.format_version != kArtifactFormatVersion)
    throw_data_error("unsupported-artifact-version", std::to_string(a.format_version));
  a.trained_at_ms = r.i64();

  auto model = DeviceModelId::try_parse(r.str());
  if (!model) corrupt("bad model id");
  a.model = *model;
  a.training_flow_count = r.u64();
  a.default_threshold = r.f64();
  const auto n_cal = r.count(12);
  for (std::uint32_t i = 0; i < n_cal; ++i) {
    const auto p = r.i32();
    a.calibrated_thresholds[p] = r.f64();
  }

  auto& s = a.schema;
  s.model = a.model;
  for (auto* range : {&s.in_bytes, &s.out_bytes, &s.flow_duration}) {
    range->min = r.f64();
    range->max = r.f64();
  }
  s.protocols = r.u32_list();
  s.dst_ports = r.u32_list();
  const auto n_l7 = r.count(4);
  for (std::uint32_t i = 0; i < n_l7; ++i) s.l7_protos.push_back(r.str());
  s.src_tos = r.u32_list();
  s.dst_tos = r.u32_list();

  const auto subsample = r.u64();
  const auto seed = r.u64();
  const auto dimension = r.u64();
  const auto n_trees = r.count(8);
  std::vector<IsolationTree> trees;
  trees.reserve(n_trees);
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    const auto height = r.u32();
    const auto n_nodes = r.count(5);
    std::vector<IsolationTree::Node> nodes(n_nodes);
    for (auto& n : nodes) {
      const auto tag = r.u8();
      if (tag == 0) {
        n.external = true;
        n.size = r.u32();
      } else if (tag == 1) {
        n.external = false;
        n.dimension = r.u32();
        n.split_value = r.f64();
        n.right = r.u32();
      } else {
        corrupt("bad node tag");
      }
    }
    try {
      trees.emplace_back(std::move(nodes), height);
    } catch (const Error& e) {
      corrupt(e.what());
    }
  }
  if (r.pos() != body.size()) corrupt("trailing bytes");
  try {
    a.forest = IsolationForest(std::move(trees), subsample, seed, dimension);
  } catch (const Error& e) {
    corrupt(e.what());
  }
  if (a.schema.dimension() != a.forest.dimension())
    throw_data_error("dimension-mismatch", "schema " + std::to_string(a.schema.dimension()) + " vs forest " +
                                               std::to_string(a.forest.dimension()));
  return a;
}

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path) {
  const auto bytes = serialize_artifact(artifact);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io_error("unwritable-file", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_io_error("write-failed", path.string());
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io_error("unreadable-file", path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_artifact(bytes);
}

std::uint64_t artifact_digest(const ModelArtifact& artifact) {
  Writer w;
  write_model_section(w, artifact);
  return fnv1a64(w.buffer());
}

}  // namespace iotnat::iforest
