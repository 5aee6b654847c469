#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace kbforge {

// Q followed by decimal digits.
bool isEntityId(std::string_view id);
// P followed by decimal digits.
bool isPropertyId(std::string_view id);

// Numeric part of a Q/P id; nullopt when malformed or out of range.
std::optional<std::uint64_t> numericId(std::string_view id);

// Orders ids of the same prefix numerically (Q9 < Q10), falling back to
// lexicographic order for anything else.
bool idLess(std::string_view a, std::string_view b);

std::string trim(std::string_view s);

}  // namespace kbforge
