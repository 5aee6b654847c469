#include "kbforge/kbcore/hash.hpp"

#include <cstdio>

namespace kbforge {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnvUpdate(std::uint64_t h, std::string_view data) {
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t stableHash(std::string_view data) { return mix(fnvUpdate(kFnvOffset, data)); }

std::uint64_t stableHash(std::initializer_list<std::string_view> fields) {
  std::uint64_t h = kFnvOffset;
  for (auto field : fields) {
    char len[24];
    int n = std::snprintf(len, sizeof(len), "%zu:", field.size());
    h = fnvUpdate(h, std::string_view(len, static_cast<std::size_t>(n)));
    h = fnvUpdate(h, field);
  }
  return mix(h);
}

std::uint64_t samplingKey(std::uint64_t seed, std::string_view a, std::string_view b) {
  return mix(stableHash({a, b}) ^ mix(seed));
}

std::string toHex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace kbforge
