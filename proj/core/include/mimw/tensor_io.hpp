#pragma once

#include <optional>
#include <string>

#include "mimw/sim.hpp"

namespace mimw {

// Flat binary tensor file: 8-byte magic "MIMWTNSR", u32 rank, u32 extents,
// little-endian f32 payload.
bool write_tensor(const std::string &path, const Tile &t);
std::optional<Tile> read_tensor(const std::string &path);

// Seeded uniform [-1, 1] fill with a fixed, platform-independent mapping
// from the raw 64-bit stream (not uniform_real_distribution, whose output
// is implementation-defined).
Tile random_tile(const std::vector<std::int64_t> &shape, std::uint64_t seed);

}  // namespace mimw
