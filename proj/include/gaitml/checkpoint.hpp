#pragma once

#include "gaitml/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gaitml {

using named_tensors = std::vector<std::pair<std::string, tensor>>;

inline constexpr std::uint32_t checkpoint_version = 1;

// "GMLB" container: header {magic, version u32, count u32}, then per tensor
// {u32 name length, UTF-8 name, u32 rank, u32 dims..., f64 values...}.
void save_checkpoint(const std::string& path, const named_tensors& params);
named_tensors load_checkpoint(const std::string& path);

} // namespace gaitml
