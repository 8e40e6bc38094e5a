#include "hfm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'F', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr char kOptimizerPrefix[] = "rmsprop.v/";

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const char* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof value);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void put_array(const std::string& name, const Shape& shape, std::span<const Scalar> values) {
    put_string(name);
    put(static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put(static_cast<std::uint32_t>(d));
    for (Scalar v : values) put(static_cast<float>(v));
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::size_t end, const std::string& file)
      : bytes_(bytes), end_(end), file_(file) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof value);
    pos_ += sizeof value;
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw DataError(file_ + ": checkpoint is truncated");
  }
  const std::vector<char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string file_;
};

std::uint32_t checksum(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  Writer w;
  w.bytes().insert(w.bytes().end(), kMagic, kMagic + 8);
  w.put(kCheckpointVersion);
  w.put(ckpt.seed);
  w.put(static_cast<std::uint32_t>(ckpt.next_epoch));
  w.put(ckpt.optimizer_steps);
  w.put_string(ckpt.config_text);
  w.put(static_cast<std::uint32_t>(ckpt.params.entries().size() + ckpt.optimizer_state.size()));
  for (const auto& e : ckpt.params.entries()) w.put_array(e.name, e.tensor.shape(), e.tensor.data());
  for (const auto& [name, v] : ckpt.optimizer_state)
    w.put_array(kOptimizerPrefix + name, {static_cast<int>(v.size())}, v);
  w.put(checksum(w.bytes().data(), w.bytes().size()));

  std::filesystem::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + file.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = file.string();
  if (bytes.size() < 8 + 4 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw DataError(name + ": not a checkpoint (bad magic)");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t actual = checksum(bytes.data(), bytes.size() - 4);
  if (stored != actual) {
    char msg[96];
    std::snprintf(msg, sizeof msg, ": checksum mismatch (stored %08x, computed %08x)", stored, actual);
    throw DataError(name + msg);
  }

  Reader r(bytes, bytes.size() - 4, name);
  for (int i = 0; i < 8; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError(name + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.seed = r.get<std::uint64_t>();
  c.next_epoch = static_cast<int>(r.get<std::uint32_t>());
  c.optimizer_steps = r.get<std::uint64_t>();
  c.config_text = r.get_string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::string array = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DataError(name + ": array " + array + " has implausible rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
    std::vector<Scalar> values(numel(shape));
    for (Scalar& v : values) v = static_cast<Scalar>(r.get<float>());
    if (array.rfind(kOptimizerPrefix, 0) == 0) {
      c.optimizer_state[array.substr(std::strlen(kOptimizerPrefix))] = std::move(values);
    } else {
      if (c.params.contains(array)) throw DataError(name + ": duplicate array " + array);
      c.params.add(array, Tensor::from(shape, values, true));
    }
  }
  if (!r.done()) throw DataError(name + ": unexpected bytes after the last array");
  return c;
}

void assign_parameters(Parameters& target, const Parameters& source) {
  if (target.entries().size() != source.entries().size())
    throw DataError("checkpoint has " + std::to_string(source.entries().size()) + " parameter arrays, model expects " +
                    std::to_string(target.entries().size()));
  for (auto& e : target.entries()) {
    if (!source.contains(e.name)) throw DataError("checkpoint is missing parameter " + e.name);
    const Tensor& src = source.at(e.name);
    if (src.shape() != e.tensor.shape())
      throw DataError("parameter " + e.name + " has shape " + to_string(src.shape()) + " in the checkpoint but " +
                      to_string(e.tensor.shape()) + " in the model");
    std::copy(src.data().begin(), src.data().end(), e.tensor.mutable_data().begin());
  }
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
