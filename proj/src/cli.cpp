#include "artrack/cli.hpp"

#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "artrack/errors.hpp"
#include "artrack/marker.hpp"
#include "artrack/registry.hpp"
#include "artrack/synth.hpp"
#include "json.hpp"

namespace artrack {

using nlohmann::json;

void draw_line(GrayImage& img, PixelPoint a, PixelPoint b, std::uint8_t value) {
  const int dx = std::abs(b.x - a.x);
  const int dy = std::abs(b.y - a.y);
  const int sx = b.x >= a.x ? 1 : -1;
  const int sy = b.y >= a.y ? 1 : -1;
  auto plot = [&](int x, int y) {
    if (img.contains(x, y)) img.at(x, y) = value;
  };
  if (dx >= dy) {
    int err = 2 * dy - dx;
    int y = a.y;
    for (int i = 0, x = a.x; i <= dx; ++i, x += sx) {
      plot(x, y);
      if (err > 0) {
        y += sy;
        err -= 2 * dx;
      }
      err += 2 * dy;
    }
  } else {
    int err = 2 * dx - dy;
    int x = a.x;
    for (int i = 0, y = a.y; i <= dy; ++i, y += sy) {
      plot(x, y);
      if (err > 0) {
        x += sx;
        err -= 2 * dy;
      }
      err += 2 * dx;
    }
  }
}

std::size_t draw_segments(GrayImage& img, const std::vector<Segment2>& segments,
                          std::uint8_t value) {
  constexpr double kLimit = 1e6;
  std::size_t drawn = 0;
  for (const auto& s : segments) {
    if (s.a.cwiseAbs().maxCoeff() > kLimit || s.b.cwiseAbs().maxCoeff() > kLimit) continue;
    draw_line(img,
              {static_cast<int>(std::lround(s.a.x())), static_cast<int>(std::lround(s.a.y()))},
              {static_cast<int>(std::lround(s.b.x())), static_cast<int>(std::lround(s.b.y()))},
              value);
    ++drawn;
  }
  return drawn;
}

namespace {

json pose_json(const Pose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(p.R(i, j));
  }
  return {{"R", r}, {"t", {p.t.x(), p.t.y(), p.t.z()}}};
}

Pose pose_from_json(const json& j) {
  const auto r = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw FormatError("pose must have R[9] and t[3]");
  Pose p;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) p.R(i, k) = r[static_cast<std::size_t>(3 * i + k)];
  }
  p.t = Eigen::Vector3d(t[0], t[1], t[2]);
  return p;
}

MarkerDictionary dictionary_or_default(const std::string& path) {
  return path.empty() ? default_dictionary() : load_dictionary_file(path);
}

// --- detect ----------------------------------------------------------------------

struct DetectOptions {
  std::vector<std::string> images;
  std::vector<std::string> image_list;
  std::string markers;
  std::string intrinsics;
  std::string site;
  std::string threshold = "128";
  double min_confidence = kDefaultMinConfidence;
  bool refine = false;
  std::string out;
};

int cmd_detect(const DetectOptions& o, std::ostream& out, std::ostream& err) {
  if (o.images.empty()) {
    err << "detect: no input frames (use --image or --images)\n";
    return kExitInputError;
  }
  DetectParams params;
  params.min_confidence = o.min_confidence;
  if (o.threshold == "auto" || o.threshold == "AUTO") {
    params.threshold = kAutoThreshold;
  } else {
    int t = -1;
    try {
      std::size_t used = 0;
      t = std::stoi(o.threshold, &used);
      if (used != o.threshold.size()) t = -1;
    } catch (const std::exception&) {
    }
    if (t < 0 || t > 255) {
      err << "detect: --threshold must be 0..255 or 'auto'\n";
      return kExitInputError;
    }
    params.threshold = t;
  }

  std::optional<MarkerDictionary> dict;
  CameraIntrinsics k;
  SiteStore site;
  try {
    dict = dictionary_or_default(o.markers);
    k = load_intrinsics_file(o.intrinsics);
    if (!o.site.empty()) site = load_site_file(o.site);
  } catch (const Error& e) {
    err << "detect: " << e.what() << "\n";
    return kExitInputError;
  }

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::trunc);
    if (!file) {
      err << "detect: cannot write '" << o.out << "'\n";
      return kExitInputError;
    }
  }
  std::ostream& sink = o.out.empty() ? out : file;

  int code = kExitOk;
  for (const auto& path : o.images) {
    GrayImage img;
    try {
      img = load_pgm_file(path);
    } catch (const Error& e) {
      err << "detect: " << e.what() << "\n";
      code = kExitInputError;
      continue;
    }
    if (img.width() != k.width || img.height() != k.height) {
      err << "detect: warning: " << path << " is " << img.width() << "x" << img.height()
          << " but intrinsics describe " << k.width << "x" << k.height << "\n";
    }
    json line = {{"frame", path}, {"detections", json::array()}};
    for (const Detection& d : detect_markers(img, *dict, params)) {
      const MarkerTemplate* t = dict->find(d.marker_id);
      json entry = {{"marker_id", d.marker_id},
                    {"building", nullptr},
                    {"corners", json::array()},
                    {"rotation", d.rotation},
                    {"confidence", d.confidence},
                    {"pose", nullptr},
                    {"reprojection_error_px", nullptr}};
      if (auto b = lookup_by_marker(site, d.marker_id)) entry["building"] = b->name;
      for (const auto& c : d.corners) entry["corners"].push_back({c.x(), c.y()});
      try {
        Pose pose = estimate_pose(d, t->side_m, k);
        double rms = reprojection_error(pose, d, t->side_m, k);
        if (o.refine) {
          const RefineResult r = refine_pose(pose, d, t->side_m, k);
          pose = r.pose;
          rms = r.final_error;
        }
        entry["pose"] = pose_json(pose);
        entry["reprojection_error_px"] = rms;
      } catch (const Error& e) {
        err << "detect: warning: " << path << ": marker " << d.marker_id << ": " << e.what()
            << "\n";
      }
      line["detections"].push_back(std::move(entry));
    }
    sink << line.dump() << "\n";
  }
  return code;
}

// --- synth -----------------------------------------------------------------------

struct SynthOptions {
  std::string markers;
  int marker_id = 1;
  std::string pose = "0,0,0,0,0,1";
  std::string intrinsics;
  double noise = 0.0;
  std::uint64_t seed = 0;
  int background = 255;
  std::string out;
  std::string truth;
};

int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<double> v;
  {
    std::stringstream ss(o.pose);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        err << "synth: --pose must be 6 comma-separated numbers (yaw,pitch,roll,tx,ty,tz)\n";
        return kExitInputError;
      }
    }
  }
  if (v.size() != 6) {
    err << "synth: --pose must be 6 comma-separated numbers (yaw,pitch,roll,tx,ty,tz)\n";
    return kExitInputError;
  }
  if (o.background < 0 || o.background > 255) {
    err << "synth: --background must be 0..255\n";
    return kExitInputError;
  }
  try {
    const MarkerDictionary dict = dictionary_or_default(o.markers);
    const MarkerTemplate* t = dict.find(o.marker_id);
    if (t == nullptr) {
      err << "synth: marker id " << o.marker_id << " not in dictionary\n";
      return kExitInputError;
    }
    SynthScene scene;
    scene.marker = *t;
    scene.pose.R = rotation_from_ypr_deg(v[0], v[1], v[2]);
    scene.pose.t = Eigen::Vector3d(v[3], v[4], v[5]);
    scene.intrinsics = o.intrinsics.empty() ? CameraIntrinsics{} : load_intrinsics_file(o.intrinsics);
    scene.noise_sigma = o.noise;
    scene.seed = o.seed;
    scene.background = static_cast<std::uint8_t>(o.background);
    const GrayImage img = render_marker(scene);
    save_pgm_file(o.out, img);
    std::string truth = o.truth;
    if (truth.empty()) truth = std::filesystem::path(o.out).replace_extension(".json").string();
    std::ofstream tf(truth, std::ios::trunc);
    if (!tf) throw FormatError("cannot write '" + truth + "'");
    tf << ground_truth_json(scene);
    out << json{{"frame", o.out}, {"truth", truth}}.dump() << "\n";
  } catch (const Error& e) {
    err << "synth: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}

// --- generate / dictionary -------------------------------------------------------

int cmd_generate(const std::string& markers, int id, int cell_px, const std::string& path,
                 std::ostream& err) {
  try {
    const MarkerDictionary dict = dictionary_or_default(markers);
    const MarkerTemplate* t = dict.find(id);
    if (t == nullptr) {
      err << "generate: marker id " << id << " not in dictionary\n";
      return kExitInputError;
    }
    save_pgm_file(path, generate_marker_image(*t, cell_px));
  } catch (const Error& e) {
    err << "generate: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}

// --- site ------------------------------------------------------------------------

json building_json(const BuildingRecord& b) {
  return json::parse(site_to_json(SiteStore{{b}, {}, {}}))["buildings"][0];
}

template <typename Fn>
int with_site(const std::string& path, bool mutate, std::ostream& err, Fn&& fn) {
  try {
    SiteLock lock(path, mutate ? SiteLock::Mode::kExclusive : SiteLock::Mode::kShared);
    SiteStore store;
    try {
      store = load_site_file_or_empty(path);
    } catch (const FormatError& e) {
      err << "site: " << e.what() << "\n";
      return static_cast<int>(kExitInputError);
    }
    std::optional<SiteStore> updated = fn(std::move(store));
    if (mutate && updated) save_site_file(path, *updated);
  } catch (const LockError& e) {
    err << "site: " << e.what() << "\n";
    return static_cast<int>(kExitLockContention);
  } catch (const ConflictError& e) {
    err << "site: " << e.what() << "\n";
    return static_cast<int>(kExitRegistryError);
  } catch (const ValidationError& e) {
    err << "site: " << e.what() << "\n";
    return static_cast<int>(kExitRegistryError);
  } catch (const Error& e) {
    err << "site: " << e.what() << "\n";
    return static_cast<int>(kExitInputError);
  }
  return static_cast<int>(kExitOk);
}

// --- overlay ---------------------------------------------------------------------

struct OverlayOptions {
  std::string detections;
  std::string site;
  std::string intrinsics;
  std::string frame;
  std::string out;
};

int cmd_overlay(const OverlayOptions& o, std::ostream& out, std::ostream& err) {
  GrayImage img;
  CameraIntrinsics k;
  SiteStore site;
  json report;
  try {
    img = load_pgm_file(o.frame);
    k = load_intrinsics_file(o.intrinsics);
    site = load_site_file(o.site);
    std::vector<json> lines;
    std::ifstream in(o.detections);
    if (!in) throw FormatError("cannot open detections file '" + o.detections + "'");
    std::string text;
    while (std::getline(in, text)) {
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        lines.push_back(json::parse(text));
      } catch (const json::exception& e) {
        throw FormatError(o.detections + ": " + e.what());
      }
    }
    const std::string frame_name = std::filesystem::path(o.frame).filename().string();
    for (const auto& l : lines) {
      const std::string f = l.value("frame", std::string());
      if (f == o.frame || std::filesystem::path(f).filename().string() == frame_name) {
        report = l;
        break;
      }
    }
    if (report.is_null()) {
      if (lines.size() != 1) {
        throw FormatError(o.detections + ": no report line for frame '" + o.frame + "'");
      }
      report = lines.front();
    }
    if (!report.contains("detections") || !report["detections"].is_array()) {
      throw FormatError(o.detections + ": report line lacks a detections array");
    }
  } catch (const Error& e) {
    err << "overlay: " << e.what() << "\n";
    return kExitInputError;
  }

  const std::filesystem::path site_dir = std::filesystem::path(o.site).parent_path();
  std::size_t overlays = 0;
  for (const auto& det : report["detections"]) {
    try {
      const int marker_id = det.at("marker_id").get<int>();
      const auto building = lookup_by_marker(site, marker_id);
      if (!building || !building->model_path) {
        err << "overlay: warning: marker " << marker_id << " has no bound model\n";
        continue;
      }
      if (!det.contains("pose") || det["pose"].is_null()) {
        err << "overlay: warning: marker " << marker_id << " has no pose\n";
        continue;
      }
      std::filesystem::path mesh_path(*building->model_path);
      if (mesh_path.is_relative()) mesh_path = site_dir / mesh_path;
      Mesh mesh;
      try {
        mesh = load_obj_file(mesh_path.string());
      } catch (const Error& e) {
        err << "overlay: warning: " << building->name << ": " << e.what() << "\n";
        continue;
      }
      const Pose pose = pose_from_json(det["pose"]);
      const ModelViewMatrix mv = model_view_matrix(pose, building->local.value_or(LocalTransform{}));
      const auto segments = project_model(mesh, mv, k);
      if (segments.empty()) {
        err << "overlay: warning: " << building->name << ": model is behind the camera\n";
        continue;
      }
      if (draw_segments(img, segments) > 0) ++overlays;
    } catch (const std::exception& e) {
      err << "overlay: warning: skipping detection: " << e.what() << "\n";
    }
  }

  try {
    save_pgm_file(o.out, img);
  } catch (const Error& e) {
    err << "overlay: " << e.what() << "\n";
    return kExitInputError;
  }
  out << json{{"frame", o.out}, {"overlays", overlays}}.dump() << "\n";
  return overlays > 0 ? kExitOk : kExitNoOverlay;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Square fiducial marker detection, pose estimation and overlay toolkit"};
  app.require_subcommand(1);

  DetectOptions det;
  auto* detect = app.add_subcommand("detect", "Detect markers and estimate poses; writes JSONL");
  detect->add_option("--image", det.images, "Input PGM frame (repeatable)");
  detect->add_option("--images", det.image_list, "Ordered list of input PGM frames");
  detect->add_option("--markers", det.markers, "Dictionary markers.json (default: built-in)");
  detect->add_option("--intrinsics", det.intrinsics, "camera.json")->required();
  detect->add_option("--site", det.site, "site.json used to name detected buildings");
  detect->add_option("--threshold", det.threshold, "Binarization threshold 0..255 or 'auto'");
  detect->add_option("--min-confidence", det.min_confidence, "Minimum payload agreement");
  detect->add_flag("--refine", det.refine, "Refine poses by Gauss-Newton");
  detect->add_option("--out", det.out, "Output JSONL path (default: stdout)");

  SynthOptions syn;
  auto* synth = app.add_subcommand("synth", "Render a marker at a known pose");
  synth->add_option("--markers", syn.markers, "Dictionary markers.json (default: built-in)");
  synth->add_option("--marker-id", syn.marker_id, "Marker to render")->required();
  synth->add_option("--pose", syn.pose, "yaw,pitch,roll (degrees),tx,ty,tz (meters)")->required();
  synth->add_option("--intrinsics", syn.intrinsics, "camera.json (default: 960x720, f=800)");
  synth->add_option("--noise", syn.noise, "Gaussian noise sigma in grey levels");
  synth->add_option("--seed", syn.seed, "Noise seed");
  synth->add_option("--background", syn.background, "Background intensity");
  synth->add_option("--out", syn.out, "Output PGM frame")->required();
  synth->add_option("--truth", syn.truth, "Ground-truth JSON (default: frame path with .json)");

  std::string gen_markers;
  std::string gen_out;
  int gen_id = 1;
  int gen_cell = 16;
  auto* generate = app.add_subcommand("generate", "Write a printable marker image");
  generate->add_option("--markers", gen_markers, "Dictionary markers.json (default: built-in)");
  generate->add_option("--marker-id", gen_id, "Marker to render")->required();
  generate->add_option("--cell-px", gen_cell, "Cell size in pixels (>= 4)");
  generate->add_option("--out", gen_out, "Output PGM")->required();

  std::string dict_out;
  auto* dictionary = app.add_subcommand("dictionary", "Write the built-in markers.json");
  dictionary->add_option("--out", dict_out, "Output path (default: stdout)");

  OverlayOptions ov;
  auto* overlay = app.add_subcommand("overlay", "Draw bound building wireframes onto a frame");
  overlay->add_option("--detections", ov.detections, "JSONL from detect")->required();
  overlay->add_option("--site", ov.site, "site.json")->required();
  overlay->add_option("--intrinsics", ov.intrinsics, "camera.json")->required();
  overlay->add_option("--frame", ov.frame, "Input PGM frame")->required();
  overlay->add_option("--out", ov.out, "Output PGM")->required();

  std::string site_path = "site.json";
  auto* site = app.add_subcommand("site", "Manage buildings, comments and managers");
  site->add_option("--site", site_path, "site.json path");
  site->require_subcommand(1);

  auto* building = site->add_subcommand("building", "Building records");
  building->require_subcommand(1);
  BuildingRecord rec;
  int rec_marker = -1;
  std::string rec_model;
  double rec_scale = 1.0;
  std::vector<double> rec_rotation;
  std::vector<double> rec_translation;
  auto* building_add = building->add_subcommand("add", "Insert or replace a building");
  building_add->add_option("--id", rec.id)->required();
  building_add->add_option("--name", rec.name)->required();
  building_add->add_option("--description", rec.description);
  auto* marker_opt = building_add->add_option("--marker", rec_marker, "Bound marker id");
  building_add->add_option("--model", rec_model, "OBJ mesh path");
  auto* scale_opt = building_add->add_option("--scale", rec_scale, "Model scale");
  auto* rot_opt = building_add->add_option("--rotation", rec_rotation, "Axis-angle (3 numbers)")
                      ->expected(3);
  auto* trans_opt =
      building_add->add_option("--translation", rec_translation, "Offset (3 numbers)")->expected(3);
  auto* building_list = building->add_subcommand("list", "List buildings");
  int remove_id = 0;
  auto* building_remove = building->add_subcommand("remove", "Remove a building");
  building_remove->add_option("--id", remove_id)->required();

  auto* comment = site->add_subcommand("comment", "Visitor comments");
  comment->require_subcommand(1);
  std::string c_author;
  std::string c_text;
  std::int64_t c_time = -1;
  auto* comment_add = comment->add_subcommand("add", "Post a comment");
  comment_add->add_option("--author", c_author)->required();
  comment_add->add_option("--text", c_text)->required();
  comment_add->add_option("--timestamp", c_time, "UTC seconds (default: now)");
  auto* comment_list = comment->add_subcommand("list", "List comments");

  auto* manager = site->add_subcommand("manager", "Site managers");
  manager->require_subcommand(1);
  std::string m_name;
  auto* manager_add = manager->add_subcommand("add", "Add a manager");
  manager_add->add_option("--name", m_name)->required();
  auto* manager_list = manager->add_subcommand("list", "List managers");

  int bind_building = 0;
  int bind_marker_id = 0;
  auto* bind = site->add_subcommand("bind", "Bind a marker to a building");
  bind->add_option("--building", bind_building)->required();
  bind->add_option("--marker", bind_marker_id)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  if (detect->parsed()) {
    det.images.insert(det.images.end(), det.image_list.begin(), det.image_list.end());
    return cmd_detect(det, out, err);
  }
  if (synth->parsed()) return cmd_synth(syn, out, err);
  if (overlay->parsed()) return cmd_overlay(ov, out, err);
  if (generate->parsed()) return cmd_generate(gen_markers, gen_id, gen_cell, gen_out, err);
  if (dictionary->parsed()) {
    const std::string text = dictionary_to_json(default_dictionary());
    if (dict_out.empty()) {
      out << text;
      return kExitOk;
    }
    std::ofstream f(dict_out, std::ios::trunc);
    if (!f || !(f << text)) {
      err << "dictionary: cannot write '" << dict_out << "'\n";
      return kExitInputError;
    }
    return kExitOk;
  }

  // site
  if (building_add->parsed()) {
    if (*marker_opt) rec.marker_id = rec_marker;
    if (!rec_model.empty()) rec.model_path = rec_model;
    if (*scale_opt || *rot_opt || *trans_opt) {
      LocalTransform local;
      local.scale = rec_scale;
      if (!rec_rotation.empty()) local.rotation = {rec_rotation[0], rec_rotation[1], rec_rotation[2]};
      if (!rec_translation.empty()) {
        local.translation = {rec_translation[0], rec_translation[1], rec_translation[2]};
      }
      rec.local = local;
    }
    return with_site(site_path, true, err, [&](SiteStore s) -> std::optional<SiteStore> {
      s = upsert_building(std::move(s), rec);
      out << building_json(rec).dump() << "\n";
      return s;
    });
  }
  if (building_list->parsed()) {
    return with_site(site_path, false, err, [&](SiteStore s) -> std::optional<SiteStore> {
      out << json::parse(site_to_json(s))["buildings"].dump() << "\n";
      return std::nullopt;
    });
  }
  if (building_remove->parsed()) {
    return with_site(site_path, true, err, [&](SiteStore s) -> std::optional<SiteStore> {
      return remove_building(std::move(s), remove_id);
    });
  }
  if (comment_add->parsed()) {
    const std::int64_t ts = c_time >= 0 ? c_time : static_cast<std::int64_t>(std::time(nullptr));
    return with_site(site_path, true, err, [&](SiteStore s) -> std::optional<SiteStore> {
      s = post_comment(std::move(s), c_author, c_text, ts);
      out << json{{"author", c_author}, {"timestamp", ts}, {"text", c_text}}.dump() << "\n";
      return s;
    });
  }
  if (comment_list->parsed()) {
    return with_site(site_path, false, err, [&](SiteStore s) -> std::optional<SiteStore> {
      out << json::parse(site_to_json(s))["comments"].dump() << "\n";
      return std::nullopt;
    });
  }
  if (manager_add->parsed()) {
    return with_site(site_path, true, err, [&](SiteStore s) -> std::optional<SiteStore> {
      s = add_manager(std::move(s), m_name);
      out << json{{"name", m_name}}.dump() << "\n";
      return s;
    });
  }
  if (manager_list->parsed()) {
    return with_site(site_path, false, err, [&](SiteStore s) -> std::optional<SiteStore> {
      out << json::parse(site_to_json(s))["managers"].dump() << "\n";
      return std::nullopt;
    });
  }
  if (bind->parsed()) {
    return with_site(site_path, true, err, [&](SiteStore s) -> std::optional<SiteStore> {
      s = bind_marker(std::move(s), bind_building, bind_marker_id);
      if (auto b = lookup_by_marker(s, bind_marker_id)) out << building_json(*b).dump() << "\n";
      return s;
    });
  }
  err << "no command given\n";
  return kExitInputError;
}

}  // namespace artrack
