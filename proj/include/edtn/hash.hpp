#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace edtn {

// FNV-1a 64. Stable across platforms and builds; used for content hashes embedded in
// output files (mesh ids, config hashes, forward-map cache keys).
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ull;
    }
  }
  void add(std::uint64_t v) { add_bytes(&v, sizeof v); }
  void add(std::int64_t v) { add_bytes(&v, sizeof v); }
  void add(int v) { add(static_cast<std::int64_t>(v)); }
  void add(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    add(bits);
  }
  void add(const std::string& s) { add_bytes(s.data(), s.size()); }
  void add(std::span<const double> v) {
    for (double x : v) add(x);
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

std::string hash_hex(std::uint64_t h);

}  // namespace edtn
