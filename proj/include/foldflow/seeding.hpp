#pragma once

// Named random streams derived from one root seed.
//
// stream_seed(root, name) = splitmix64(root ^ fnv1a64(name)); indexed streams
// append "/<index>" to the name. Every consumer of randomness owns one
// stream, so adding a consumer never shifts the draws of another.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace foldflow {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name) { return splitmix64(root ^ fnv1a64(name)); }

inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
  return stream_seed(root, std::string(name) + "/" + std::to_string(index));
}

inline std::mt19937_64 make_stream(std::uint64_t root, std::string_view name) {
  return std::mt19937_64(stream_seed(root, name));
}

}  // namespace foldflow
