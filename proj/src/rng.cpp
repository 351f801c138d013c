#include "lfd/rng.hpp"

namespace lfd {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(uint64_t seed, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::seed_seq seq{static_cast<uint32_t>(splitmix64(seed ^ h)),
                    static_cast<uint32_t>(splitmix64(seed ^ h) >> 32),
                    static_cast<uint32_t>(splitmix64(h + seed * 31)),
                    static_cast<uint32_t>(splitmix64(h + seed * 31) >> 32)};
  return Rng(seq);
}

}  // namespace lfd
