#include "thg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "thg/errors.hpp"

namespace thg::ckpt {

namespace {

// Caps for structurally corrupt files, so a bad header can't ask for a
// multi-gigabyte allocation before the truncation check would catch it.
constexpr std::uint32_t kMaxNameLen = 1u << 16;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                     static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) |
         static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw IoError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

std::vector<NamedTensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back({p->name, p->value});
  return out;
}

void save(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape())
      put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.value.size(); ++i) put_f64(os, t.value[i]);
  }
  os.flush();
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

std::vector<NamedTensor> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad checkpoint magic");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is);
    if (name_len > kMaxNameLen) throw IoError("corrupt checkpoint: name length");
    std::string name(name_len, '\0');
    if (name_len && !is.read(name.data(), name_len))
      throw IoError("truncated checkpoint");
    const std::uint32_t rank = get_u32(is);
    if (rank > kMaxRank) throw IoError("corrupt checkpoint: tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = get_u32(is);
      if (dim == 0 || dim > kMaxDim)
        throw IoError("corrupt checkpoint: tensor dim");
      shape[d] = dim;
      n *= dim;
    }
    std::vector<double> data(n);
    for (std::size_t k = 0; k < n; ++k) data[k] = get_f64(is);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void load_into(const std::vector<NamedTensor>& tensors,
               const std::vector<Parameter*>& params) {
  std::vector<const Tensor*> matched(params.size(), nullptr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const NamedTensor& t : tensors) {
      if (t.name != params[i]->name) continue;
      if (!t.value.same_shape(params[i]->value))
        throw ContractError("checkpoint tensor '" + t.name + "' has shape " +
                            t.value.shape_str() + ", parameter expects " +
                            params[i]->value.shape_str());
      matched[i] = &t.value;
      break;
    }
    if (!matched[i])
      throw ContractError("checkpoint is missing tensor '" + params[i]->name +
                          "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->value = *matched[i];
}

}  // namespace thg::ckpt
