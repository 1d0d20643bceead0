#include "oct1d/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace oct1d {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::Parse, "snapshot truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_snapshot(const std::vector<NamedTensor>& entries) {
  std::vector<std::uint8_t> out(std::begin(kSnapshotMagic), std::end(kSnapshotMagic));
  put<std::uint32_t>(out, kSnapshotVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) put<std::uint64_t>(out, d);
    for (double v : e.value.data()) put<double>(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_snapshot(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kSnapshotMagic, 4)) fail(ErrorKind::Parse, "bad snapshot magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion)
    fail(ErrorKind::Parse, "unsupported snapshot version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = r.str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = r.get<double>();
    e.value = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(e));
  }
  if (!r.done()) fail(ErrorKind::Parse, "trailing bytes after snapshot");
  return out;
}

void save_parameters(const ParameterStore& store, const std::filesystem::path& path) {
  std::vector<NamedTensor> entries;
  for (std::size_t i = 0; i < store.size(); ++i) entries.push_back({store[i].name, store[i].value});
  const auto bytes = encode_snapshot(entries);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void load_parameters(ParameterStore& store, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  for (auto& e : decode_snapshot(bytes)) {
    Parameter* p = store.find(e.name);
    if (!p) fail(ErrorKind::Input, "snapshot parameter '" + e.name + "' not in model");
    require_same_shape(p->value, e.value, "load_parameters");
    p->value = std::move(e.value);
  }
}

}  // namespace oct1d
