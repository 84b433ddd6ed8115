#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "artrack/errors.hpp"
#include "artrack/pose.hpp"

namespace artrack {

struct BuildingRecord {
  int id = 0;
  std::string name;
  std::string description;
  std::optional<int> marker_id;
  std::optional<std::string> model_path;
  // Placement of the model on its mark; identity when absent.
  std::optional<LocalTransform> local;
};

struct Comment {
  std::string author;
  std::int64_t timestamp = 0;  // UTC seconds
  std::string text;
};

struct Manager {
  std::string name;
};

inline constexpr std::size_t kMaxCommentChars = 2000;

// Buildings keep insertion order; comments are kept in nondecreasing
// timestamp order (ties in posting order) and are never edited or removed.
struct SiteStore {
  std::vector<BuildingRecord> buildings;
  std::vector<Comment> comments;
  std::vector<Manager> managers;
};

bool operator==(const LocalTransform& a, const LocalTransform& b);
bool operator==(const BuildingRecord& a, const BuildingRecord& b);
bool operator==(const Comment& a, const Comment& b);
bool operator==(const Manager& a, const Manager& b);
bool operator==(const SiteStore& a, const SiteStore& b);

// Inserts or replaces by id. Throws ConflictError if the record's marker is
// bound to another building, ValidationError on an empty name.
SiteStore upsert_building(SiteStore store, BuildingRecord record);
// Throws ValidationError if no building has `id`.
SiteStore remove_building(SiteStore store, int id);
// Binds `marker_id` to an existing building, replacing its previous marker.
SiteStore bind_marker(SiteStore store, int building_id, int marker_id);
std::optional<BuildingRecord> lookup_by_marker(const SiteStore& store, int marker_id);

// Throws ValidationError on empty text or text over kMaxCommentChars code points.
SiteStore post_comment(SiteStore store, std::string author, std::string text,
                       std::int64_t timestamp);
const std::vector<Comment>& list_comments(const SiteStore& store);

// Throws ValidationError on an empty name, ConflictError on a duplicate.
SiteStore add_manager(SiteStore store, std::string name);

// Checks every store invariant; throws ValidationError/ConflictError.
void validate_store(const SiteStore& store);

std::string site_to_json(const SiteStore& store);
// Comments are stably sorted by timestamp on load.
SiteStore parse_site_json(std::string_view text);
SiteStore load_site_file(const std::string& path);
// Missing file reads as an empty store.
SiteStore load_site_file_or_empty(const std::string& path);
// Writes a sibling temp file and renames it over `path`.
void save_site_file(const std::string& path, const SiteStore& store);

class LockError : public Error {
 public:
  using Error::Error;
};

// Advisory flock on "<site path>.lock", held for the object's lifetime.
// Throws LockError immediately if another process holds a conflicting lock.
class SiteLock {
 public:
  enum class Mode { kShared, kExclusive };

  SiteLock(const std::string& site_path, Mode mode);
  ~SiteLock();
  SiteLock(const SiteLock&) = delete;
  SiteLock& operator=(const SiteLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace artrack
