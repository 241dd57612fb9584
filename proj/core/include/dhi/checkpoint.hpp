#pragma once

#include <string>

#include "dhi/model.hpp"

namespace dhi {

// Checkpoint = <prefix>.manifest.json + <prefix>.bin.
//
// The manifest lists every parameter field with its shape and byte offset
// into the blob, plus the model config. The blob is the concatenation of all
// fields as flat little-endian 64-bit floats in manifest order. Round trips
// are bit-exact.
void save_checkpoint(const std::string& prefix, const ModelParams& params);
ModelParams load_checkpoint(const std::string& prefix);

}  // namespace dhi
