#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spikekour {

// Every source of randomness in a run hangs off one root seed through named
// substreams, so "env 7" or "init" can be reproduced in isolation.
inline uint64_t substream_seed(uint64_t root, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ull ^ root;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  // splitmix64 finalizer to decorrelate nearby roots
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

inline uint64_t substream_seed(uint64_t root, std::string_view name, uint64_t index) {
  return substream_seed(substream_seed(root, name), std::to_string(index));
}

inline std::mt19937 make_rng(uint64_t root, std::string_view name) {
  return std::mt19937(static_cast<uint32_t>(substream_seed(root, name) & 0xffffffffu));
}

inline std::mt19937 make_rng(uint64_t root, std::string_view name, uint64_t index) {
  return std::mt19937(static_cast<uint32_t>(substream_seed(root, name, index) & 0xffffffffu));
}

}  // namespace spikekour
