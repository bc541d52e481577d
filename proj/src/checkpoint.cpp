#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "enlg/errors.hpp"
#include "enlg/models.hpp"

namespace enlg {

namespace {

constexpr char kMagic[4] = {'E', 'N', 'L', 'G'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_bytes(std::ostream& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError("checkpoint " + path_ + " is truncated");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::string bytes(std::uint32_t limit = 1u << 24) {
    const std::uint32_t n = u32();
    if (n > limit) throw FormatError("checkpoint " + path_ + " has an implausible field length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::string path_;
};

struct Array {
  std::string name;
  std::vector<std::size_t> shape;
  const float* data;
  std::size_t size;
};

void collect(const ParamStore<float>& store, std::string_view prefix, std::vector<Array>& out) {
  for (std::size_t i = 0; i < store.slots().size(); ++i) {
    const auto& s = store.slot(i);
    out.push_back({std::string(prefix) + s.name, s.shape, store.data(i), s.size});
  }
}

void write_checkpoint(const std::string& path, ModelKind kind, const ModelConfig& cfg,
                      const std::vector<Array>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(kind));
  put_bytes(out, cfg.to_json().dump());
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_bytes(out, a.name);
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& a : arrays)
    for (std::size_t i = 0; i < a.size; ++i) put_u32(out, std::bit_cast<std::uint32_t>(a.data[i]));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

struct Header {
  ModelKind kind;
  ModelConfig config;
};

Header read_header(Reader& r, const std::string& path) {
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + " is not an ENLG checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint " + path + " has format version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  const std::uint32_t kind = r.u32();
  if (kind < 1 || kind > 3) throw FormatError("checkpoint " + path + " has an unknown model kind");
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(nlohmann::json::parse(r.bytes()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path + " has a malformed config block: " + e.what());
  }
  return {static_cast<ModelKind>(kind), cfg};
}

/// Fills the named stores from the file body; every slot must be present with
/// a matching shape.
void read_body(Reader& r, const std::string& path,
               std::vector<std::pair<std::string_view, ParamStore<float>*>> stores) {
  const std::uint32_t count = r.u32();
  struct Entry {
    float* dst;
    std::size_t size;
  };
  std::vector<Entry> entries;
  std::size_t expected = 0;
  for (const auto& [prefix, store] : stores) expected += store->slots().size();
  if (count != expected)
    throw FormatError("checkpoint " + path + " holds " + std::to_string(count) +
                      " arrays, model expects " + std::to_string(expected));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(4096);
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError("checkpoint " + path + " has an implausible rank");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u32();
    ParamStore<float>* owner = nullptr;
    std::string local;
    for (const auto& [prefix, store] : stores) {
      if (!prefix.empty() && name.starts_with(prefix)) {
        owner = store;
        local = name.substr(prefix.size());
        break;
      }
    }
    if (owner == nullptr) {
      for (const auto& [prefix, store] : stores)
        if (prefix.empty()) owner = store;
      local = name;
    }
    const std::size_t slot = owner->find(local);
    if (slot == owner->slots().size())
      throw FormatError("checkpoint " + path + " has unexpected array '" + name + "'");
    if (owner->slot(slot).shape != shape)
      throw FormatError("checkpoint " + path + " array '" + name + "' has the wrong shape");
    entries.push_back({owner->data(slot), owner->slot(slot).size});
  }
  for (const auto& e : entries)
    for (std::size_t i = 0; i < e.size; ++i) e.dst[i] = std::bit_cast<float>(r.u32());
}

template <class Model>
Model load_as(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  Reader r(in, path);
  const Header h = read_header(r, path);
  if (h.kind != Model::kKind)
    throw KindMismatchError("checkpoint " + path + " holds a " + std::string(kind_name(h.kind)) +
                            ", not a " + std::string(kind_name(Model::kKind)));
  Model model(h.config);
  if constexpr (Model::kKind == ModelKind::Critic)
    read_body(r, path, {{"target.", &model.targets()}, {"", &model.params()}});
  else
    read_body(r, path, {{"", &model.params()}});
  return model;
}

}  // namespace

void save_checkpoint(const PolicyNet<float>& model, const std::string& path) {
  std::vector<Array> arrays;
  collect(model.params(), "", arrays);
  write_checkpoint(path, ModelKind::Policy, model.config(), arrays);
}

void save_checkpoint(const ScorerNet<float>& model, const std::string& path) {
  std::vector<Array> arrays;
  collect(model.params(), "", arrays);
  write_checkpoint(path, ModelKind::Scorer, model.config(), arrays);
}

void save_checkpoint(const CriticBundle<float>& model, const std::string& path) {
  std::vector<Array> arrays;
  collect(model.params(), "", arrays);
  collect(model.targets(), "target.", arrays);
  write_checkpoint(path, ModelKind::Critic, model.config(), arrays);
}

PolicyNet<float> load_policy(const std::string& path) { return load_as<PolicyNet<float>>(path); }
ScorerNet<float> load_scorer(const std::string& path) { return load_as<ScorerNet<float>>(path); }
CriticBundle<float> load_critic(const std::string& path) {
  return load_as<CriticBundle<float>>(path);
}

ModelKind checkpoint_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  Reader r(in, path);
  return read_header(r, path).kind;
}

}  // namespace enlg
