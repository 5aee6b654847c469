#pragma once

// Builds Wikidata-shaped JSON dump lines for fixtures.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace kbforge::testing {

struct FixtureClaim {
  std::string property;
  std::string value;  // entity id, or literal text when literal = true
  std::string rank = "normal";
  bool literal = false;
};

inline std::string entityLine(const std::string& id, std::optional<std::string> english_label,
                              const std::vector<FixtureClaim>& claims) {
  using nlohmann::json;
  json labels = json::object();
  if (english_label) labels["en"] = {{"language", "en"}, {"value", *english_label}};
  labels["de"] = {{"language", "de"}, {"value", "de:" + id}};
  json claim_map = json::object();
  for (const auto& c : claims) {
    json datavalue;
    if (c.literal) {
      datavalue = {{"type", "string"}, {"value", c.value}};
    } else {
      datavalue = {{"type", "wikibase-entityid"},
                   {"value", {{"entity-type", "item"}, {"numeric-id", std::stoull(c.value.substr(1))}, {"id", c.value}}}};
    }
    claim_map[c.property].push_back(
        {{"mainsnak", {{"snaktype", "value"}, {"property", c.property}, {"datavalue", datavalue}}},
         {"type", "statement"},
         {"rank", c.rank}});
  }
  json doc{{"type", "item"}, {"id", id}, {"labels", labels}, {"claims", claim_map}};
  return doc.dump();
}

// Wraps entity lines in the dump's outer array, commas after all but the last.
inline std::string dumpOf(const std::vector<std::string>& lines) {
  std::string out = "[\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += lines[i];
    if (i + 1 < lines.size()) out += ",";
    out += "\n";
  }
  out += "]\n";
  return out;
}

}  // namespace kbforge::testing
