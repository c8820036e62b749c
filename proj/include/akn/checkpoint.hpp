#pragma once

#include "akn/graph.hpp"

#include <filesystem>
#include <iosfwd>

namespace akn {

// AKCK: magic, u32 version (1), u32 blob count, then per blob u16 name length,
// UTF-8 name, u8 rank, u32 dims, little-endian f32 payload.
void write_checkpoint(std::ostream& os, const Parameters<float>& params);
Parameters<float> read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params);
Parameters<float> load_checkpoint(const std::filesystem::path& path);

} // namespace akn
