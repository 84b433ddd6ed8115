#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "artrack/errors.hpp"
#include "artrack/pose.hpp"

namespace artrack {

void Mesh::validate() const {
  if (triangles.empty()) throw ValidationError("mesh has no triangles");
  const int n = static_cast<int>(vertices.size());
  for (const auto& tri : triangles) {
    for (int idx : tri) {
      if (idx < 0 || idx >= n) {
        throw ValidationError("mesh: vertex index " + std::to_string(idx) + " out of range [0," +
                              std::to_string(n) + ")");
      }
    }
  }
}

namespace {

double parse_double(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("OBJ line " + std::to_string(line_no) + ": bad number '" + tok + "'",
                      line_no);
  }
}

int parse_face_index(const std::string& tok, int vertex_count, std::size_t line_no) {
  const std::string head = tok.substr(0, tok.find('/'));
  int value = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (ec != std::errc() || ptr != head.data() + head.size() || value == 0) {
    throw FormatError("OBJ line " + std::to_string(line_no) + ": bad face index '" + tok + "'",
                      line_no);
  }
  return value > 0 ? value - 1 : vertex_count + value;
}

}  // namespace

Mesh parse_obj(std::string_view text) {
  Mesh mesh;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "v") {
      std::string x, y, z;
      if (!(ls >> x >> y >> z)) {
        throw FormatError("OBJ line " + std::to_string(line_no) + ": vertex needs 3 coordinates",
                          line_no);
      }
      mesh.vertices.emplace_back(parse_double(x, line_no), parse_double(y, line_no),
                                 parse_double(z, line_no));
    } else if (kind == "f") {
      std::vector<int> idx;
      std::string tok;
      const int count = static_cast<int>(mesh.vertices.size());
      while (ls >> tok) idx.push_back(parse_face_index(tok, count, line_no));
      if (idx.size() < 3) {
        throw FormatError("OBJ line " + std::to_string(line_no) + ": face needs 3 vertices",
                          line_no);
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) {
        mesh.triangles.push_back({idx[0], idx[i], idx[i + 1]});
      }
    }
  }
  try {
    mesh.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("OBJ: ") + e.what());
  }
  return mesh;
}

Mesh load_obj_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open mesh file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_obj(ss.str());
}

}  // namespace artrack
