#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "p2cws/errors.hpp"
#include "p2cws/scene_model.hpp"
#include "test_support.hpp"

using namespace p2cws;
using p2cws::testing::make_detection;
using p2cws::testing::make_track;

namespace {

const char* kMinimalFile =
    R"({"type":"meta","frame_rate":30.0,"crosswalks":[{"a":[100,200],"b":[300,200]}],"semantic":{"width":4,"height":2,"rle":[[0,3],[2,5]]},"camera":null}
{"type":"det","id":1,"class":"Person","t":0.0,"bbox":[0,0,10,50],"anchor":[5,50],"pose":null,"toes":null,"state":"not_crossing"}
{"type":"det","id":2,"class":"Car","t":0.0,"bbox":[20,0,60,40],"anchor":[60,40],"pose":null,"toes":null,"state":null}
{"type":"det","id":1,"class":"Person","t":0.0333,"bbox":[1,0,11,50],"anchor":[6,50],"pose":{"hip_mid":[0,0,0],"neck":[0,0.5,0]},"toes":[[4,51],[8,51]],"state":"crossing"}
)";

SceneBundle parse(const std::string& text) {
  std::istringstream in(text);
  return parse_scene(in);
}

std::string serialize(const SceneBundle& scene) {
  std::ostringstream out;
  write_scene(scene, out);
  return out.str();
}

SceneBundle random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(0.0, 500.0);
  std::uniform_int_distribution<int> ntracks(0, 4);
  SceneBundle scene;
  scene.frame_rate = 30.0;
  scene.semantics = SemanticGrid(8, 4, SemanticLabel::kSidewalk);
  scene.semantics.set(3, 2, SemanticLabel::kCrosswalk);
  scene.crosswalks.push_back({Vec2(coord(rng), coord(rng)), Vec2(coord(rng) + 600.0, coord(rng))});
  CameraModel cam;
  cam.intrinsic << 800.0, 0.0, 320.0, 0.0, 810.0, 240.0, 0.0, 0.0, 1.0;
  scene.camera = cam;
  const int n = ntracks(rng);
  for (int id = 1; id <= n; ++id) {
    EntityTrack tr;
    tr.id = id * 3;
    tr.cls = static_cast<EntityClass>(id % 5);
    double t = 0.1 * id;
    for (int k = 0; k < 5; ++k) {
      t += 1.0 / 30.0 + 0.001 * k;
      Detection d = make_detection(t, Vec2(coord(rng), coord(rng)), 20.0 + coord(rng));
      if (k % 2 == 0) {
        Pose3D p = testing::upright_pose(t);
        p.joints[JointName::kNeck].x() = coord(rng) * 1e-3;
        d.pose = p;
        d.toes = std::array<Vec2, 2>{Vec2(coord(rng), coord(rng)), Vec2(0.1, 1.0 / 3.0)};
        d.state = CrossingState::kCrossing;
      }
      tr.detections.push_back(d);
    }
    scene.tracks.push_back(tr);
  }
  return scene;
}

}  // namespace

TEST_CASE("load minimal file with one person and one car") {
  const SceneBundle scene = parse(kMinimalFile);
  REQUIRE(scene.tracks.size() == 2);
  CHECK(scene.tracks[0].cls == EntityClass::kPerson);
  CHECK(scene.tracks[0].detections.size() == 2);
  CHECK(scene.tracks[1].cls == EntityClass::kCar);
  CHECK(scene.semantics.at(2, 0) == SemanticLabel::kRoad);
  CHECK(scene.semantics.at(3, 0) == SemanticLabel::kCrosswalk);
  CHECK(scene.crosswalks[0].midpoint() == Vec2(200, 200));
  CHECK(scene.tracks[0].detections[1].pose->joints.size() == 2);
  CHECK(scene.tracks[0].detections[1].state == CrossingState::kCrossing);
  CHECK_FALSE(scene.camera.has_value());
}

TEST_CASE("non-monotone timestamps are rejected") {
  const std::string bad =
      R"({"type":"meta","frame_rate":30.0,"crosswalks":[],"semantic":{"width":0,"height":0,"rle":[]},"camera":null}
{"type":"det","id":1,"class":"Person","t":0.0,"bbox":[0,0,10,50],"anchor":[5,50],"pose":null,"toes":null,"state":null}
{"type":"det","id":1,"class":"Person","t":0.0,"bbox":[0,0,10,50],"anchor":[5,50],"pose":null,"toes":null,"state":null}
)";
  CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("non-monotone timestamps"), DataError);
}

TEST_CASE("schema violations name the record and field") {
  const std::string meta =
      R"({"type":"meta","frame_rate":30.0,"crosswalks":[],"semantic":{"width":0,"height":0,"rle":[]},"camera":null})";
  SUBCASE("unknown class") {
    const std::string bad = meta + "\n" +
        R"({"type":"det","id":4,"class":"Tram","t":0.0,"bbox":[0,0,10,50],"anchor":[5,50],"pose":null,"toes":null,"state":null})";
    CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("unknown class 'Tram'"), DataError);
  }
  SUBCASE("missing field") {
    const std::string bad = meta + "\n" +
        R"({"type":"det","id":4,"class":"Car","t":0.0,"anchor":[5,50],"pose":null,"toes":null,"state":null})";
    CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("id 4), field 'bbox'"), DataError);
  }
  SUBCASE("inverted bbox") {
    const std::string bad = meta + "\n" +
        R"({"type":"det","id":4,"class":"Car","t":0.0,"bbox":[10,0,0,50],"anchor":[5,50],"pose":null,"toes":null,"state":null})";
    CHECK_THROWS_AS(parse(bad), DataError);
  }
  SUBCASE("rle does not cover the grid") {
    const std::string bad =
        R"({"type":"meta","frame_rate":30.0,"crosswalks":[],"semantic":{"width":2,"height":2,"rle":[[1,3]]},"camera":null})";
    CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("semantic"), DataError);
  }
  SUBCASE("class changes inside a track") {
    const std::string bad = meta + "\n" +
        R"({"type":"det","id":4,"class":"Car","t":0.0,"bbox":[0,0,10,50],"anchor":[5,50],"pose":null,"toes":null,"state":null})" +
        "\n" +
        R"({"type":"det","id":4,"class":"Bus","t":0.1,"bbox":[0,0,10,50],"anchor":[5,50],"pose":null,"toes":null,"state":null})";
    CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("class changed"), DataError);
  }
  SUBCASE("non-orthonormal rotation") {
    const std::string bad =
        R"({"type":"meta","frame_rate":30.0,"crosswalks":[],"semantic":{"width":0,"height":0,"rle":[]},"camera":{"K":[1,0,0,0,1,0,0,0,1],"R":[2,0,0,0,1,0,0,0,1],"t":[0,0,0]}})";
    CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("orthonormal"), DataError);
  }
  SUBCASE("no meta record") { CHECK_THROWS_AS(parse(""), DataError); }
}

TEST_CASE("save is canonical: byte-identical round trip and deterministic") {
  const SceneBundle scene = parse(kMinimalFile);
  const std::string once = serialize(scene);
  const std::string twice = serialize(parse(once));
  CHECK(once == twice);
  CHECK(serialize(scene) == once);
  CHECK(parse(once) == scene);
}

TEST_CASE("scene with no tracks serializes to a meta-only file") {
  SceneBundle scene;
  const std::string text = serialize(scene);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(parse(text).tracks.empty());
}

TEST_CASE("property: load(save(scene)) is the identity on random scenes") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const SceneBundle scene = random_scene(rng);
    const std::string text = serialize(scene);
    const SceneBundle back = parse(text);
    REQUIRE(back == scene);
    CHECK(serialize(back) == text);
  }
}

TEST_CASE("save_scene and load_scene through the filesystem") {
  std::mt19937_64 rng(3);
  const SceneBundle scene = random_scene(rng);
  const auto path = std::filesystem::temp_directory_path() / "p2cws_scene_roundtrip.jsonl";
  save_scene(scene, path);
  CHECK(load_scene(path) == scene);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_scene(path), DataError);
}

TEST_CASE("sample_track nearest-within-tolerance") {
  const EntityTrack tr = make_track(1, EntityClass::kPerson,
                                    {make_detection(0.0, Vec2(0, 0), 100), make_detection(0.1, Vec2(1, 0), 100)});
  SUBCASE("exact hit") {
    const Detection* d = sample_track(tr, 0.1, 0.02);
    REQUIRE(d != nullptr);
    CHECK(d->timestamp == 0.1);
  }
  SUBCASE("nearest is 0.05 away") { CHECK(sample_track(tr, 0.05, 0.02) == nullptr); }
  SUBCASE("nearest within tolerance") {
    const Detection* d = sample_track(tr, 0.09, 0.02);
    REQUIRE(d != nullptr);
    CHECK(d->timestamp == 0.1);
  }
  SUBCASE("empty track") { CHECK(sample_track(EntityTrack{}, 0.0, 1.0) == nullptr); }
}

TEST_CASE("property: sample_track returns a detection iff min gap <= tolerance") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    EntityTrack tr;
    double t = uni(rng);
    const int n = 1 + static_cast<int>(uni(rng) * 8);
    for (int k = 0; k < n; ++k) {
      tr.detections.push_back(make_detection(t, Vec2(k, k), 10.0 + k));
      t += 0.01 + uni(rng) * 0.2;
    }
    const double q = uni(rng) * 2.5 - 0.2;
    const double tol = uni(rng) * 0.1;
    double min_gap = 1e300;
    for (const auto& d : tr.detections) min_gap = std::min(min_gap, std::abs(d.timestamp - q));
    const Detection* got = sample_track(tr, q, tol);
    CHECK((got != nullptr) == (min_gap <= tol));
    if (got != nullptr) {
      CHECK(std::abs(got->timestamp - q) == min_gap);
      CHECK(got->height_px() > 0.0);
      CHECK(got->bbox.u_max > got->bbox.u_min);
    }
  }
}

TEST_CASE("semantic grid run-length encoding") {
  SemanticGrid g(5, 3, SemanticLabel::kRoad);
  g.set(4, 0, SemanticLabel::kCrosswalk);
  g.set(0, 1, SemanticLabel::kCrosswalk);
  const auto runs = g.run_length_encode();
  REQUIRE(runs.size() == 3);
  CHECK(runs[1] == std::pair<int, std::size_t>{2, 2});
  CHECK(SemanticGrid::from_runs(5, 3, runs) == g);
  CHECK(g.at_clamped(-5, 100) == SemanticLabel::kRoad);
  CHECK(g.at_clamped(99, -1) == SemanticLabel::kCrosswalk);
  CHECK_THROWS_AS(SemanticGrid::from_runs(2, 2, {{7, 4}}), DataError);
}

TEST_CASE("joint and class names round-trip") {
  for (auto j : all_joints()) CHECK(parse_joint(to_string(j)) == j);
  CHECK_FALSE(parse_joint("tail").has_value());
  for (int c = 0; c < 5; ++c) {
    const auto cls = static_cast<EntityClass>(c);
    CHECK(parse_entity_class(to_string(cls)) == cls);
  }
}
