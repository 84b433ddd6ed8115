#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "artrack/errors.hpp"
#include "artrack/marker.hpp"
#include "json.hpp"

namespace artrack {

namespace {

Payload payload_from_rows(const std::vector<std::string>& rows) {
  if (rows.size() != kPayloadSide) {
    throw FormatError("payload must have " + std::to_string(kPayloadSide) + " rows");
  }
  Payload p;
  for (int r = 0; r < kPayloadSide; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (row.size() != kPayloadSide) {
      throw FormatError("payload row " + std::to_string(r) + " must have " +
                        std::to_string(kPayloadSide) + " characters");
    }
    for (int c = 0; c < kPayloadSide; ++c) {
      const char ch = row[static_cast<std::size_t>(c)];
      if (ch != '0' && ch != '1') {
        throw FormatError("payload row " + std::to_string(r) + " has non-binary character");
      }
      p.set(r, c, ch == '1');
    }
  }
  return p;
}

}  // namespace

MarkerDictionary::MarkerDictionary(std::vector<MarkerTemplate> templates)
    : templates_(std::move(templates)) {
  std::set<int> ids;
  for (const auto& t : templates_) {
    if (!ids.insert(t.id).second) {
      throw ValidationError("dictionary: duplicate marker id " + std::to_string(t.id));
    }
    if (!(t.side_m > 0.0)) {
      throw ValidationError("dictionary: marker " + std::to_string(t.id) +
                            " side_m must be positive");
    }
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        if (t.payload.rotated_cw(a) == t.payload.rotated_cw(b)) {
          throw ValidationError("dictionary: marker " + std::to_string(t.id) +
                                " payload is rotationally symmetric");
        }
      }
    }
  }
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    for (std::size_t j = i + 1; j < templates_.size(); ++j) {
      for (int k = 0; k < 4; ++k) {
        const int d = templates_[i].payload.rotated_cw(k).hamming(templates_[j].payload);
        if (d < kMinHamming) {
          throw ValidationError("dictionary: markers " + std::to_string(templates_[i].id) +
                                " and " + std::to_string(templates_[j].id) + " differ by only " +
                                std::to_string(d) + " bits at rotation " + std::to_string(k));
        }
      }
    }
  }
}

const MarkerTemplate* MarkerDictionary::find(int id) const {
  auto it = std::find_if(templates_.begin(), templates_.end(),
                         [id](const MarkerTemplate& t) { return t.id == id; });
  return it == templates_.end() ? nullptr : &*it;
}

MarkerDictionary default_dictionary() {
  // Payloads chosen by search: every pair, under every rotation, and every
  // template against its own rotations differ by at least 16 bits.
  const std::vector<std::pair<const char*, std::vector<std::string>>> entries = {
      {"Burnt Palace", {"000011", "100101", "000011", "110101", "011100", "001010"}},
      {"Pyramid B", {"000110", "001001", "110100", "110111", "110001", "110001"}},
      {"Pyramid C", {"011001", "000010", "110101", "011110", "101010", "010001"}},
      {"Shrine", {"001111", "110001", "100001", "000011", "111111", "100011"}},
  };
  std::vector<MarkerTemplate> templates;
  int id = 1;
  for (const auto& [name, rows] : entries) {
    templates.push_back(MarkerTemplate{id++, name, payload_from_rows(rows), 0.1});
  }
  return MarkerDictionary(std::move(templates));
}

MarkerDictionary parse_dictionary_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("markers.json: ") + e.what(), e.byte);
  }
  if (!doc.is_array()) throw FormatError("markers.json: top level must be an array");
  std::vector<MarkerTemplate> templates;
  try {
    for (const auto& entry : doc) {
      MarkerTemplate t;
      t.id = entry.at("id").get<int>();
      t.name = entry.at("name").get<std::string>();
      t.side_m = entry.at("side_m").get<double>();
      t.payload = payload_from_rows(entry.at("payload").get<std::vector<std::string>>());
      templates.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("markers.json: ") + e.what());
  }
  return MarkerDictionary(std::move(templates));
}

MarkerDictionary load_dictionary_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dictionary file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dictionary_json(ss.str());
}

std::string dictionary_to_json(const MarkerDictionary& dict) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& t : dict.templates()) {
    doc.push_back({{"id", t.id},
                   {"name", t.name},
                   {"side_m", t.side_m},
                   {"payload", t.payload.to_rows()}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace artrack
