#pragma once

// Versioned binary container shared by every serializable model. Layout:
//   magic "TFRG" | u32 version | u64 schema_hash | u32 n_meta | n_meta doubles
//   | u32 n_blocks | per block: u32 name_len, name bytes, u32 rank, extents,
//   little-endian f64 data.
// Loading refuses on magic/version/schema-hash mismatch.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tabforge/common.hpp"

namespace tabforge::io {

struct Block {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t schema_hash{0};
  std::vector<double> meta;  // free-form scalar header fields (d, layer sizes, ...)
  std::map<std::string, Block> blocks;

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for write: " + path);
    f.write("TFRG", 4);
    write_u32(f, kVersion);
    write_u64(f, schema_hash);
    write_u32(f, static_cast<std::uint32_t>(meta.size()));
    for (double v : meta) write_f64(f, v);
    write_u32(f, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& [name, b] : blocks) {
      write_u32(f, static_cast<std::uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(f, static_cast<std::uint32_t>(b.shape.size()));
      for (auto e : b.shape) write_u32(f, static_cast<std::uint32_t>(e));
      for (double v : b.data) write_f64(f, v);
    }
    if (!f) throw Error("write failed: " + path);
  }

  static Container load(const std::string& path, std::uint64_t expected_schema_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "TFRG", 4) != 0) throw Error("bad magic in " + path);
    if (read_u32(f) != kVersion) throw Error("unsupported container version in " + path);
    Container c;
    c.schema_hash = read_u64(f);
    if (expected_schema_hash != 0 && c.schema_hash != expected_schema_hash)
      throw SchemaMismatchError("model file " + path + " was trained against a different schema");
    const std::uint32_t nm = read_u32(f);
    c.meta.resize(nm);
    for (auto& v : c.meta) v = read_f64(f);
    const std::uint32_t nb = read_u32(f);
    for (std::uint32_t i = 0; i < nb; ++i) {
      const std::uint32_t nl = read_u32(f);
      std::string name(nl, '\0');
      f.read(name.data(), nl);
      Block b;
      const std::uint32_t rank = read_u32(f);
      std::size_t n = 1;
      b.shape.resize(rank);
      for (auto& e : b.shape) {
        e = read_u32(f);
        n *= e;
      }
      b.data.resize(n);
      for (auto& v : b.data) v = read_f64(f);
      c.blocks[name] = std::move(b);
    }
    if (!f) throw Error("truncated container: " + path);
    return c;
  }

 private:
  static void write_u32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  }
  static void write_u64(std::ostream& f, std::uint64_t v) {
    write_u32(f, static_cast<std::uint32_t>(v));
    write_u32(f, static_cast<std::uint32_t>(v >> 32));
  }
  static void write_f64(std::ostream& f, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    write_u64(f, u);
  }
  static std::uint32_t read_u32(std::istream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  static std::uint64_t read_u64(std::istream& f) {
    const std::uint64_t lo = read_u32(f);
    const std::uint64_t hi = read_u32(f);
    return lo | (hi << 32);
  }
  static double read_f64(std::istream& f) {
    const std::uint64_t u = read_u64(f);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
};

}  // namespace tabforge::io
