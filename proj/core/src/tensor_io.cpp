#include "mimw/tensor_io.hpp"

#include <cstdio>
#include <cstring>
#include <random>

namespace mimw {

namespace {
constexpr char kMagic[8] = {'M', 'I', 'M', 'W', 'T', 'N', 'S', 'R'};

void put_u32(std::FILE *f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

bool get_u32(std::FILE *f, std::uint32_t &v) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}
}  // namespace

bool write_tensor(const std::string &path, const Tile &t) {
  std::FILE *f = std::fopen(path.c_str(), "wb");
  if (!f) return false;
  std::fwrite(kMagic, 1, 8, f);
  put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put_u32(f, static_cast<std::uint32_t>(d));
  for (float x : t.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32(f, bits);
  }
  std::fclose(f);
  return true;
}

std::optional<Tile> read_tensor(const std::string &path) {
  std::FILE *f = std::fopen(path.c_str(), "rb");
  if (!f) return std::nullopt;
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    std::fclose(f);
    return std::nullopt;
  }
  std::uint32_t rank = 0;
  if (!get_u32(f, rank) || rank > 8) {
    std::fclose(f);
    return std::nullopt;
  }
  std::vector<std::int64_t> shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    if (!get_u32(f, d)) {
      std::fclose(f);
      return std::nullopt;
    }
    shape.push_back(d);
  }
  Tile t(shape);
  for (auto &x : t.data) {
    std::uint32_t bits = 0;
    if (!get_u32(f, bits)) {
      std::fclose(f);
      return std::nullopt;
    }
    std::memcpy(&x, &bits, 4);
  }
  std::fclose(f);
  return t;
}

Tile random_tile(const std::vector<std::int64_t> &shape, std::uint64_t seed) {
  Tile t(shape);
  std::mt19937_64 rng(seed);
  for (auto &x : t.data) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    x = static_cast<float>(u * 2.0 - 1.0);
  }
  return t;
}

}  // namespace mimw
