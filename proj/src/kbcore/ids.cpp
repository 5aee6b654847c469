#include "kbforge/kbcore/ids.hpp"

#include <charconv>

namespace kbforge {
namespace {

bool prefixedDigits(std::string_view id, char prefix) {
  if (id.size() < 2 || id[0] != prefix) return false;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return false;
  }
  return true;
}

}  // namespace

bool isEntityId(std::string_view id) { return prefixedDigits(id, 'Q'); }
bool isPropertyId(std::string_view id) { return prefixedDigits(id, 'P'); }

std::optional<std::uint64_t> numericId(std::string_view id) {
  if (!isEntityId(id) && !isPropertyId(id)) return std::nullopt;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), value);
  if (ec != std::errc() || ptr != id.data() + id.size()) return std::nullopt;
  return value;
}

bool idLess(std::string_view a, std::string_view b) {
  if (!a.empty() && !b.empty() && a[0] == b[0]) {
    auto na = numericId(a);
    auto nb = numericId(b);
    if (na && nb) return *na < *nb;
  }
  return a < b;
}

std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(ws);
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace kbforge
