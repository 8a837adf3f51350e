#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thg/parameter.hpp"
#include "thg/tensor.hpp"

namespace thg::ckpt {

inline constexpr char kMagic[4] = {'T', 'H', 'G', '1'};
inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Copies parameter values under their registered names.
std::vector<NamedTensor> snapshot(const std::vector<Parameter*>& params);

// Binary layout, everything little-endian: "THG1", version u32, tensor count
// u32, then per tensor: name length u32, name bytes, rank u32, one u32 per
// dim, and the f64 payload bit-for-bit. Roundtrips are bit-exact.
void save(const std::string& path, const std::vector<NamedTensor>& tensors);

// Throws IoError on unreadable/corrupt files ("bad checkpoint magic",
// unsupported version, truncation) without partial results.
std::vector<NamedTensor> load(const std::string& path);

// Assigns tensors to parameters by name. Every parameter must be matched by
// name and shape; all lookups are checked (ContractError) before any
// parameter is written, so failure leaves the model untouched.
void load_into(const std::vector<NamedTensor>& tensors,
               const std::vector<Parameter*>& params);

}  // namespace thg::ckpt
