#pragma once

#include <filesystem>
#include <string>

#include "shopmatch/models/model.hpp"

namespace shopmatch {

// "M2SH" checkpoint: version, variant record, layer configuration, then every
// stack's layers as shape-prefixed little-endian float32 blobs.
std::string encode_checkpoint(const Model<float>& model);
Model<float> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace shopmatch
