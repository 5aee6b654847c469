#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace kbforge {

// Stable 64-bit content hash (FNV-1a with a splitmix64 finalizer). Output is
// identical across platforms and runs; never use std::hash for anything that
// ends up in an artifact or drives sampling.
std::uint64_t stableHash(std::string_view data);

// Hash of a sequence of fields; fields are length-prefixed so ("ab","c") and
// ("a","bc") differ.
std::uint64_t stableHash(std::initializer_list<std::string_view> fields);

// Seed-keyed sampling priority. Smallest keys win.
std::uint64_t samplingKey(std::uint64_t seed, std::string_view a, std::string_view b);

std::string toHex(std::uint64_t value);

}  // namespace kbforge
