#include "artrack/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace artrack {

bool operator==(const LocalTransform& a, const LocalTransform& b) {
  return a.scale == b.scale && a.rotation == b.rotation && a.translation == b.translation;
}

bool operator==(const BuildingRecord& a, const BuildingRecord& b) {
  return a.id == b.id && a.name == b.name && a.description == b.description &&
         a.marker_id == b.marker_id && a.model_path == b.model_path && a.local == b.local;
}

bool operator==(const Comment& a, const Comment& b) {
  return a.author == b.author && a.timestamp == b.timestamp && a.text == b.text;
}

bool operator==(const Manager& a, const Manager& b) { return a.name == b.name; }

bool operator==(const SiteStore& a, const SiteStore& b) {
  return a.buildings == b.buildings && a.comments == b.comments && a.managers == b.managers;
}

namespace {

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

void validate_comment(const Comment& c) {
  if (c.text.empty()) throw ValidationError("comment text must not be empty");
  const std::size_t len = utf8_length(c.text);
  if (len > kMaxCommentChars) {
    throw ValidationError("comment text has " + std::to_string(len) + " characters (max " +
                          std::to_string(kMaxCommentChars) + ")");
  }
}

}  // namespace

SiteStore upsert_building(SiteStore store, BuildingRecord record) {
  if (record.name.empty()) throw ValidationError("building name must not be empty");
  if (record.local && !(record.local->scale > 0.0)) {
    throw ValidationError("building " + std::to_string(record.id) + ": scale must be positive");
  }
  if (record.marker_id) {
    for (const auto& b : store.buildings) {
      if (b.id != record.id && b.marker_id == record.marker_id) {
        throw ConflictError("marker " + std::to_string(*record.marker_id) +
                            " is already bound to building " + std::to_string(b.id) +
                            "; cannot bind it to building " + std::to_string(record.id));
      }
    }
  }
  auto it = std::find_if(store.buildings.begin(), store.buildings.end(),
                         [&](const BuildingRecord& b) { return b.id == record.id; });
  if (it != store.buildings.end()) {
    *it = std::move(record);
  } else {
    store.buildings.push_back(std::move(record));
  }
  return store;
}

SiteStore remove_building(SiteStore store, int id) {
  auto it = std::find_if(store.buildings.begin(), store.buildings.end(),
                         [&](const BuildingRecord& b) { return b.id == id; });
  if (it == store.buildings.end()) {
    throw ValidationError("no building with id " + std::to_string(id));
  }
  store.buildings.erase(it);
  return store;
}

SiteStore bind_marker(SiteStore store, int building_id, int marker_id) {
  auto it = std::find_if(store.buildings.begin(), store.buildings.end(),
                         [&](const BuildingRecord& b) { return b.id == building_id; });
  if (it == store.buildings.end()) {
    throw ValidationError("no building with id " + std::to_string(building_id));
  }
  BuildingRecord record = *it;
  record.marker_id = marker_id;
  return upsert_building(std::move(store), std::move(record));
}

std::optional<BuildingRecord> lookup_by_marker(const SiteStore& store, int marker_id) {
  for (const auto& b : store.buildings) {
    if (b.marker_id == marker_id) return b;
  }
  return std::nullopt;
}

SiteStore post_comment(SiteStore store, std::string author, std::string text,
                       std::int64_t timestamp) {
  Comment c{std::move(author), timestamp, std::move(text)};
  validate_comment(c);
  auto pos = std::upper_bound(store.comments.begin(), store.comments.end(), timestamp,
                              [](std::int64_t ts, const Comment& x) { return ts < x.timestamp; });
  store.comments.insert(pos, std::move(c));
  return store;
}

const std::vector<Comment>& list_comments(const SiteStore& store) { return store.comments; }

SiteStore add_manager(SiteStore store, std::string name) {
  if (name.empty()) throw ValidationError("manager name must not be empty");
  for (const auto& m : store.managers) {
    if (m.name == name) throw ConflictError("manager '" + name + "' already exists");
  }
  store.managers.push_back(Manager{std::move(name)});
  return store;
}

void validate_store(const SiteStore& store) {
  std::set<int> ids;
  std::set<int> markers;
  for (const auto& b : store.buildings) {
    if (b.name.empty()) throw ValidationError("building name must not be empty");
    if (!ids.insert(b.id).second) {
      throw ConflictError("duplicate building id " + std::to_string(b.id));
    }
    if (b.marker_id && !markers.insert(*b.marker_id).second) {
      throw ConflictError("marker " + std::to_string(*b.marker_id) +
                          " bound to more than one building");
    }
    if (b.local && !(b.local->scale > 0.0)) {
      throw ValidationError("building " + std::to_string(b.id) + ": scale must be positive");
    }
  }
  for (std::size_t i = 0; i < store.comments.size(); ++i) {
    validate_comment(store.comments[i]);
    if (i > 0 && store.comments[i].timestamp < store.comments[i - 1].timestamp) {
      throw ValidationError("comments out of timestamp order");
    }
  }
  std::set<std::string> names;
  for (const auto& m : store.managers) {
    if (m.name.empty()) throw ValidationError("manager name must not be empty");
    if (!names.insert(m.name).second) throw ConflictError("duplicate manager '" + m.name + "'");
  }
}

// --- JSON ----------------------------------------------------------------------

namespace {

nlohmann::json vec3_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw FormatError("site.json: expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

std::string site_to_json(const SiteStore& store) {
  nlohmann::json doc;
  doc["buildings"] = nlohmann::json::array();
  for (const auto& b : store.buildings) {
    nlohmann::json j = {{"id", b.id},
                        {"name", b.name},
                        {"description", b.description},
                        {"marker_id", nullptr},
                        {"model_path", nullptr}};
    if (b.marker_id) j["marker_id"] = *b.marker_id;
    if (b.model_path) j["model_path"] = *b.model_path;
    if (b.local) {
      j["local"] = {{"scale", b.local->scale},
                    {"rotation", vec3_json(b.local->rotation)},
                    {"translation", vec3_json(b.local->translation)}};
    }
    doc["buildings"].push_back(std::move(j));
  }
  doc["comments"] = nlohmann::json::array();
  for (const auto& c : store.comments) {
    doc["comments"].push_back({{"author", c.author}, {"timestamp", c.timestamp}, {"text", c.text}});
  }
  doc["managers"] = nlohmann::json::array();
  for (const auto& m : store.managers) doc["managers"].push_back({{"name", m.name}});
  return doc.dump(2) + "\n";
}

SiteStore parse_site_json(std::string_view text) {
  SiteStore store;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& j : doc.at("buildings")) {
      BuildingRecord b;
      b.id = j.at("id").get<int>();
      b.name = j.at("name").get<std::string>();
      b.description = j.value("description", std::string());
      if (j.contains("marker_id") && !j["marker_id"].is_null()) b.marker_id = j["marker_id"].get<int>();
      if (j.contains("model_path") && !j["model_path"].is_null()) {
        b.model_path = j["model_path"].get<std::string>();
      }
      if (j.contains("local") && !j["local"].is_null()) {
        const auto& l = j["local"];
        LocalTransform local;
        local.scale = l.value("scale", 1.0);
        if (l.contains("rotation")) local.rotation = vec3_from(l["rotation"]);
        if (l.contains("translation")) local.translation = vec3_from(l["translation"]);
        b.local = local;
      }
      store.buildings.push_back(std::move(b));
    }
    for (const auto& j : doc.at("comments")) {
      store.comments.push_back(Comment{j.at("author").get<std::string>(),
                                       j.at("timestamp").get<std::int64_t>(),
                                       j.at("text").get<std::string>()});
    }
    for (const auto& j : doc.at("managers")) {
      store.managers.push_back(Manager{j.at("name").get<std::string>()});
    }
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("site.json: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("site.json: ") + e.what());
  }
  std::stable_sort(store.comments.begin(), store.comments.end(),
                   [](const Comment& a, const Comment& b) { return a.timestamp < b.timestamp; });
  validate_store(store);
  return store;
}

SiteStore load_site_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open site file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_site_json(ss.str());
}

SiteStore load_site_file_or_empty(const std::string& path) {
  if (!std::filesystem::exists(path)) return {};
  return load_site_file(path);
}

void save_site_file(const std::string& path, const SiteStore& store) {
  validate_store(store);
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp + "'");
    out << site_to_json(store);
    out.flush();
    if (!out) throw FormatError("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw FormatError("cannot replace '" + path + "': " + ec.message());
  }
}

SiteLock::SiteLock(const std::string& site_path, Mode mode) {
  const std::string lock_path = site_path + ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw LockError("cannot open lock file '" + lock_path + "': " + std::strerror(errno));
  }
  const int op = (mode == Mode::kExclusive ? LOCK_EX : LOCK_SH) | LOCK_NB;
  if (::flock(fd_, op) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    if (err == EWOULDBLOCK) throw LockError("site is locked by another process: " + lock_path);
    throw LockError("cannot lock '" + lock_path + "': " + std::strerror(err));
  }
}

SiteLock::~SiteLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace artrack
