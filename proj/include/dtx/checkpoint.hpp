// checkpoint.hpp -- binary weight files: magic "CTXT1", a length-prefixed
// UTF-8 JSON manifest (name, shape, dtype, byte offset), then raw
// little-endian arrays. Round-trips must be bit-exact.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dtx/nn.hpp"

namespace dtx {

using NamedArrays = std::vector<std::pair<std::string, nn::Array>>;

void save_checkpoint(const std::string& path, const NamedArrays& arrays);
NamedArrays load_checkpoint(const std::string& path);

NamedArrays snapshot(const nn::ParamStore& params);
// Copies values into matching parameters; throws on any name/shape mismatch.
void restore(nn::ParamStore* params, const NamedArrays& arrays);

}  // namespace dtx
