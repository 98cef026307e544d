#pragma once

#include <string>

#include "glyphmatch/adam.h"
#include "glyphmatch/model.h"

namespace gm {

// Binary checkpoint: magic "GLYF", u32 version (1), u64 iteration, u32 tensor
// count, then per tensor u16 name length + name bytes + u8 dtype (0 = f32) +
// u8 ndim + u32 dims + little-endian f32 data; trailing u64 FNV-1a of all
// preceding bytes. Tensors are written in name order. Optimizer moments ride
// along as "<param>.adam.m" / "<param>.adam.v"; the training alphabet as
// "config.alphabet" (codepoints as floats).
void save_checkpoint(const std::string& path, const Model& m, const Adam* adam);

// Throws on bad magic/version/checksum or malformed layout. If adam is null,
// moment tensors are ignored.
void load_checkpoint(const std::string& path, Model& m, Adam* adam);

}  // namespace gm
