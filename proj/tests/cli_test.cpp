#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "artrack/cli.hpp"
#include "artrack/registry.hpp"
#include "json.hpp"
#include "wireframe_oracle.hpp"

using namespace artrack;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "artrack");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("artrack_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    camera_ = path("camera.json");
    write(camera_, intrinsics_to_json(CameraIntrinsics{}));
    site_ = path("site.json");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::string camera_;
  std::string site_;
};

}  // namespace

TEST(DrawLine, MatchesClosedFormWalk) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coord(-20, 80);
  for (int trial = 0; trial < 2000; ++trial) {
    const oracle::Pixel a{coord(rng), coord(rng)};
    const oracle::Pixel b{coord(rng), coord(rng)};
    GrayImage img(64, 64, 0);
    draw_line(img, {a.first, a.second}, {b.first, b.second}, 255);
    GrayImage expected(64, 64, 0);
    for (const auto& p : oracle::line_pixels(a, b)) {
      if (expected.contains(p.first, p.second)) expected.at(p.first, p.second) = 255;
    }
    ASSERT_EQ(img, expected) << a.first << "," << a.second << " -> " << b.first << "," << b.second;
  }
}

TEST(DrawLine, EndpointsAndConnectivity) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coord(0, 40);
  for (int trial = 0; trial < 500; ++trial) {
    const oracle::Pixel a{coord(rng), coord(rng)};
    const oracle::Pixel b{coord(rng), coord(rng)};
    const auto px = oracle::line_pixels(a, b);
    ASSERT_EQ(px.front(), a);
    ASSERT_EQ(px.back(), b);
    for (std::size_t i = 1; i < px.size(); ++i) {
      ASSERT_LE(std::abs(px[i].first - px[i - 1].first), 1);
      ASSERT_LE(std::abs(px[i].second - px[i - 1].second), 1);
    }
  }
}

TEST(DrawSegments, SkipsFarEndpoints) {
  GrayImage img(8, 8, 0);
  EXPECT_EQ(draw_segments(img, {{Point2(0, 0), Point2(3e6, 0)}, {Point2(0, 0), Point2(7, 0)}}), 1u);
  EXPECT_EQ(img.at(7, 0), 255);
}

TEST_F(CliTest, SynthIsDeterministic) {
  const std::vector<std::string> base = {"synth", "--marker-id", "2", "--pose", "10,-5,3,0.01,0,1",
                                         "--noise", "6", "--seed", "4"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.pgm")});
  b.insert(b.end(), {"--out", path("b.pgm")});
  ASSERT_EQ(cli(a).code, kExitOk);
  ASSERT_EQ(cli(b).code, kExitOk);
  EXPECT_EQ(slurp(path("a.pgm")), slurp(path("b.pgm")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
}

TEST_F(CliTest, SynthErrors) {
  EXPECT_EQ(cli({"synth", "--marker-id", "99", "--pose", "0,0,0,0,0,2", "--out", path("x.pgm")}).code,
            kExitInputError);
  EXPECT_EQ(cli({"synth", "--marker-id", "1", "--pose", "0,0,0,0,0", "--out", path("x.pgm")}).code,
            kExitInputError);
  const Result r = cli({"synth", "--marker-id", "1", "--pose", "0,0,0,5,0,2", "--out", path("x.pgm")});
  EXPECT_EQ(r.code, kExitInputError);
  EXPECT_NE(r.err.find("right of x"), std::string::npos) << r.err;
}

TEST_F(CliTest, DetectBlankFrameAndBadInputs) {
  save_pgm_file(path("blank.pgm"), GrayImage(960, 720, 200));
  Result r = cli({"detect", "--image", path("blank.pgm"), "--intrinsics", camera_});
  EXPECT_EQ(r.code, kExitOk);
  const auto line = nlohmann::json::parse(r.out);
  EXPECT_TRUE(line["detections"].empty());

  r = cli({"detect", "--image", path("blank.pgm"), "--intrinsics", camera_, "--markers",
           path("missing.json")});
  EXPECT_EQ(r.code, kExitInputError);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(cli({"detect", "--image", path("missing.pgm"), "--intrinsics", camera_}).code,
            kExitInputError);
  EXPECT_EQ(cli({"detect", "--image", path("blank.pgm"), "--intrinsics", camera_, "--threshold",
                 "300"})
                .code,
            kExitInputError);
}

TEST_F(CliTest, DetectNamesBoundBuilding) {
  ASSERT_EQ(cli({"site", "--site", site_, "building", "add", "--id", "1", "--name", "Burnt Palace",
                 "--marker", "1"})
                .code,
            kExitOk);
  for (int id = 1; id <= 4; ++id) {
    const std::string frame = path("m" + std::to_string(id) + ".pgm");
    ASSERT_EQ(cli({"synth", "--marker-id", std::to_string(id), "--pose", "15,-10,20,0,0,0.8",
                   "--out", frame})
                  .code,
              kExitOk);
    const Result r = cli({"detect", "--image", frame, "--intrinsics", camera_, "--site", site_,
                          "--refine"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    ASSERT_EQ(j["detections"].size(), 1u);
    const auto& d = j["detections"][0];
    EXPECT_EQ(d["marker_id"], id);
    if (id == 1) {
      EXPECT_EQ(d["building"], "Burnt Palace");
    } else {
      EXPECT_TRUE(d["building"].is_null());
    }
    EXPECT_EQ(d["pose"]["R"].size(), 9u);
    EXPECT_LT(d["reprojection_error_px"].get<double>(), 0.1);
  }
}

TEST_F(CliTest, SiteCommands) {
  const auto site = [&](std::vector<std::string> a) {
    a.insert(a.begin(), {"site", "--site", site_});
    return cli(a);
  };
  EXPECT_EQ(site({"building", "add", "--id", "1", "--name", "Burnt Palace", "--marker", "1"}).code,
            kExitOk);
  EXPECT_EQ(site({"building", "add", "--id", "2", "--name", "Pyramid B"}).code, kExitOk);
  Result r = site({"bind", "--building", "2", "--marker", "1"});
  EXPECT_EQ(r.code, kExitRegistryError);
  EXPECT_NE(r.err.find("building 1"), std::string::npos) << r.err;
  EXPECT_EQ(site({"building", "add", "--id", "3", "--name", ""}).code, kExitRegistryError);
  EXPECT_EQ(site({"building", "remove", "--id", "9"}).code, kExitRegistryError);

  EXPECT_EQ(site({"comment", "add", "--author", "v", "--text", "great", "--timestamp", "5"}).code,
            kExitOk);
  r = site({"comment", "list"});
  EXPECT_EQ(r.code, kExitOk);
  const auto comments = nlohmann::json::parse(r.out);
  ASSERT_EQ(comments.size(), 1u);
  EXPECT_EQ(comments[0]["text"], "great");

  EXPECT_EQ(site({"manager", "add", "--name", "ana"}).code, kExitOk);
  EXPECT_EQ(site({"manager", "add", "--name", "ana"}).code, kExitRegistryError);

  const SiteStore s = load_site_file(site_);
  ASSERT_EQ(s.buildings.size(), 2u);
  EXPECT_EQ(lookup_by_marker(s, 1)->name, "Burnt Palace");

  std::ofstream(site_) << "{not json";
  EXPECT_EQ(site({"building", "list"}).code, kExitInputError);
}

TEST_F(CliTest, LockContention) {
  SiteLock held(site_, SiteLock::Mode::kExclusive);
  const Result r = cli({"site", "--site", site_, "manager", "add", "--name", "x"});
  EXPECT_EQ(r.code, kExitLockContention);
  EXPECT_FALSE(fs::exists(site_));
}

TEST_F(CliTest, OverlayWithoutDrawableModel) {
  const GrayImage frame(960, 720, 90);
  save_pgm_file(path("f.pgm"), frame);
  write(site_, site_to_json(SiteStore{}));
  write(path("d.jsonl"), R"({"frame": "f.pgm", "detections": []})" "\n");
  Result r = cli({"overlay", "--detections", path("d.jsonl"), "--site", site_, "--intrinsics",
                  camera_, "--frame", path("f.pgm"), "--out", path("o.pgm")});
  EXPECT_EQ(r.code, kExitNoOverlay);
  EXPECT_EQ(load_pgm_file(path("o.pgm")), frame);

  // Bound model file missing: warning, nothing drawn.
  ASSERT_EQ(cli({"site", "--site", site_, "building", "add", "--id", "1", "--name", "Gate",
                 "--marker", "1", "--model", "nowhere.obj"})
                .code,
            kExitOk);
  write(path("d.jsonl"),
        R"({"frame": "f.pgm", "detections": [{"marker_id": 1, "pose": {"R": [1,0,0,0,1,0,0,0,1], "t": [0,0,1]}}]})"
        "\n");
  r = cli({"overlay", "--detections", path("d.jsonl"), "--site", site_, "--intrinsics", camera_,
           "--frame", path("f.pgm"), "--out", path("o.pgm")});
  EXPECT_EQ(r.code, kExitNoOverlay);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(load_pgm_file(path("o.pgm")), frame);
}

TEST_F(CliTest, OverlayBehindCameraDrawsNothing) {
  save_pgm_file(path("f.pgm"), GrayImage(960, 720, 90));
  write(path("box.obj"), oracle::box_obj(0.05));
  ASSERT_EQ(cli({"site", "--site", site_, "building", "add", "--id", "1", "--name", "Gate",
                 "--marker", "1", "--model", "box.obj"})
                .code,
            kExitOk);
  write(path("d.jsonl"),
        R"({"frame": "f.pgm", "detections": [{"marker_id": 1, "pose": {"R": [1,0,0,0,1,0,0,0,1], "t": [0,0,-1]}}]})"
        "\n");
  const Result r = cli({"overlay", "--detections", path("d.jsonl"), "--site", site_,
                        "--intrinsics", camera_, "--frame", path("f.pgm"), "--out", path("o.pgm")});
  EXPECT_EQ(r.code, kExitNoOverlay);
  EXPECT_NE(r.err.find("behind the camera"), std::string::npos) << r.err;
}

TEST_F(CliTest, OverlayMatchesIndependentRasterizer) {
  write(path("box.obj"), oracle::box_obj(0.05));
  ASSERT_EQ(cli({"site", "--site", site_, "building", "add", "--id", "1", "--name", "Burnt Palace",
                 "--marker", "1", "--model", "box.obj"})
                .code,
            kExitOk);
  ASSERT_EQ(cli({"synth", "--marker-id", "1", "--pose", "25,-20,10,0.03,-0.02,0.7", "--out",
                 path("f.pgm")})
                .code,
            kExitOk);
  const Result det = cli({"detect", "--image", path("f.pgm"), "--intrinsics", camera_, "--site",
                          site_, "--out", path("d.jsonl")});
  ASSERT_EQ(det.code, kExitOk) << det.err;
  const Result r = cli({"overlay", "--detections", path("d.jsonl"), "--site", site_,
                        "--intrinsics", camera_, "--frame", path("f.pgm"), "--out", path("o.pgm")});
  ASSERT_EQ(r.code, kExitOk) << r.err;

  const auto report = nlohmann::json::parse(slurp(path("d.jsonl")));
  const auto& pose = report["detections"][0]["pose"];
  const auto R = pose["R"].get<std::array<double, 9>>();
  const auto t = pose["t"].get<std::array<double, 3>>();
  const CameraIntrinsics k;
  const auto expected = oracle::wireframe_pixels(oracle::box_vertices(0.05), oracle::box_triangles(),
                                                 R, t, {k.fx, k.fy, k.cx, k.cy, k.width, k.height});
  ASSERT_GT(expected.size(), 200u);
  const GrayImage in = load_pgm_file(path("f.pgm"));
  const GrayImage out = load_pgm_file(path("o.pgm"));
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      const int want = expected.count({x, y}) ? 255 : in.at(x, y);
      ASSERT_EQ(out.at(x, y), want) << x << "," << y;
    }
  }
}
