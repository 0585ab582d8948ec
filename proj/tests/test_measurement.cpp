#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "p2cws/errors.hpp"
#include "p2cws/geometry.hpp"
#include "p2cws/measurement.hpp"
#include "test_support.hpp"

using namespace p2cws;
using p2cws::testing::linear_track;
using p2cws::testing::make_detection;
using p2cws::testing::make_track;

namespace {

const KnowledgeBase kKb;

EntityTrack scaled(EntityTrack tr, double k) {
  for (auto& d : tr.detections) {
    d.anchor *= k;
    d.bbox = BBox{d.bbox.u_min * k, d.bbox.v_min * k, d.bbox.u_max * k, d.bbox.v_max * k};
  }
  return tr;
}

}  // namespace

TEST_CASE("knowledge base defaults") {
  CHECK(kKb.mean_height(EntityClass::kPerson) == 1.7);
  CHECK(kKb.mean_height(EntityClass::kCyclist) == 1.5);
  CHECK(kKb.mean_height(EntityClass::kCar) == 1.5);
  CHECK(kKb.mean_height(EntityClass::kBus) == 2.5);
  CHECK(kKb.mean_height(EntityClass::kTruck) == 3.0);
  const NormalizationFactors n;
  CHECK(n.group == 10.0);
  CHECK(n.pedestrian_speed == 5.0);
  CHECK(n.vehicle_distance == 10.0);
  CHECK(n.vehicle_speed == 10.0);
  CHECK(n.crosswalk_distance == 10.0);
  CHECK(n.v2p_angle == 1.0);
  CHECK(n.distance_norm == DistanceNorm::kExp);
}

TEST_CASE("estimate_distance hand cases") {
  const Detection a = make_detection(0, Vec2(100, 300), 170);
  SUBCASE("two persons 500 px apart") {
    const Detection b = make_detection(0, Vec2(600, 300), 170);
    CHECK(estimate_distance(a, EntityClass::kPerson, b, EntityClass::kPerson, kKb) ==
          doctest::Approx(5.0).epsilon(1e-15));
  }
  SUBCASE("coincident anchors") {
    CHECK(estimate_distance(a, EntityClass::kPerson, a, EntityClass::kPerson, kKb) == 0.0);
  }
  SUBCASE("person and car 300 px apart") {
    const Detection car = make_detection(0, Vec2(100, 600), 150);
    CHECK(estimate_distance(a, EntityClass::kPerson, car, EntityClass::kCar, kKb) ==
          doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("zero pixel height") {
    Detection z = a;
    z.bbox.v_min = z.bbox.v_max;
    CHECK_THROWS_AS(estimate_distance(a, EntityClass::kPerson, z, EntityClass::kPerson, kKb), DataError);
  }
}

TEST_CASE("property: estimate_distance is symmetric") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(1.0, 900.0);
  for (int i = 0; i < 500; ++i) {
    const Detection a = make_detection(0, Vec2(uni(rng), uni(rng)), uni(rng));
    const Detection b = make_detection(0, Vec2(uni(rng), uni(rng)), uni(rng));
    const auto ca = static_cast<EntityClass>(i % 5);
    const auto cb = static_cast<EntityClass>((i / 5) % 5);
    CHECK(estimate_distance(a, ca, b, cb, kKb) == estimate_distance(b, cb, a, ca, kKb));
  }
}

TEST_CASE("property: fronto-parallel pinhole scene recovers planar distance") {
  // All objects stand at the same depth with knowledge-base-exact heights.
  CameraModel cam;
  cam.intrinsic << 900, 0, 640, 0, 900, 360, 0, 0, 1;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> lateral(-6.0, 6.0);
  std::uniform_real_distribution<double> depth(8.0, 40.0);
  for (int i = 0; i < 300; ++i) {
    const double z = depth(rng);
    const auto ca = static_cast<EntityClass>(i % 5);
    const auto cb = static_cast<EntityClass>((i + 2) % 5);
    auto render = [&](double x, double y, EntityClass cls) {
      const Vec2 foot = project_point(Vec3(x, y, z), cam);
      const Vec2 head = project_point(Vec3(x, y - kKb.mean_height(cls), z), cam);
      Detection d = make_detection(0, foot, foot.y() - head.y());
      return d;
    };
    const double xa = lateral(rng), ya = lateral(rng), xb = lateral(rng), yb = lateral(rng);
    const double truth = std::hypot(xa - xb, ya - yb);
    const double est = estimate_distance(render(xa, ya, ca), ca, render(xb, yb, cb), cb, kKb);
    CHECK(std::abs(est - truth) <= 1e-6 * std::max(truth, 1e-3));
  }
}

TEST_CASE("normalize_distance") {
  CHECK(normalize_distance(0.0, 10.0) == 1.0);
  CHECK(normalize_distance(10.0, 10.0) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(normalize_distance(10.0, 10.0, DistanceNorm::kDiv) == 1.0);
  CHECK_THROWS_AS(normalize_distance(-1.0, 10.0), DataError);
  double prev = 1.0;
  for (double d = 0.5; d < 2000.0; d *= 1.5) {
    const double v = normalize_distance(d, 10.0);
    CHECK(v < prev);
    CHECK(v >= 0.0);
    prev = v;
  }
  CHECK(normalize_distance(1e6, 10.0) < 1e-300);
}

TEST_CASE("pedestrian_speed") {
  SUBCASE("hip moves 150 px in 1 s at 170 px tall") {
    const EntityTrack tr = make_track(1, EntityClass::kPerson,
                                      {make_detection(0.0, Vec2(100, 400), 170),
                                       make_detection(1.0, Vec2(250, 400), 170)});
    CHECK(pedestrian_speed(tr, 0.0, 1.0, kKb, 0.01) == doctest::Approx(1.5).epsilon(1e-15));
  }
  SUBCASE("stationary") {
    const EntityTrack tr = linear_track(1, EntityClass::kPerson, 0, 2, Vec2(10, 10), Vec2(0, 0), 80);
    CHECK(pedestrian_speed(tr, 0.5, 1.5, kKb, 0.02) == 0.0);
  }
  SUBCASE("window too short") {
    const EntityTrack tr = linear_track(1, EntityClass::kPerson, 0, 2, Vec2(10, 10), Vec2(5, 0), 80);
    CHECK_THROWS_WITH_AS(pedestrian_speed(tr, 0.0, 0.3, kKb, 0.02), doctest::Contains("window too short"),
                         DataError);
  }
  SUBCASE("missing detection") {
    const EntityTrack tr = linear_track(1, EntityClass::kPerson, 0, 1, Vec2(10, 10), Vec2(5, 0), 80);
    CHECK_THROWS_AS(pedestrian_speed(tr, 1.0, 2.0, kKb, 0.02), MissingObservation);
  }
  SUBCASE("uses the pixel height at t2") {
    const EntityTrack tr = make_track(1, EntityClass::kPerson,
                                      {make_detection(0.0, Vec2(0, 400), 100),
                                       make_detection(0.5, Vec2(85, 400), 170)});
    CHECK(pedestrian_speed(tr, 0.0, 0.5, kKb, 0.01) == doctest::Approx(1.7));
  }
}

TEST_CASE("vehicle_speed") {
  SUBCASE("car 150 px, 500 px in 0.5 s") {
    const EntityTrack tr = make_track(7, EntityClass::kCar,
                                      {make_detection(0.0, Vec2(0, 300), 150),
                                       make_detection(0.5, Vec2(500, 300), 150)});
    CHECK(vehicle_speed(tr, 0.0, 0.5, kKb, 0.01) == doctest::Approx(10.0).epsilon(1e-15));
  }
  SUBCASE("averaged-height compensation") {
    const EntityTrack tr = make_track(7, EntityClass::kCar,
                                      {make_detection(0.0, Vec2(0, 300), 100),
                                       make_detection(1.0, Vec2(300, 300), 200)});
    CHECK(vehicle_speed(tr, 0.0, 1.0, kKb, 0.01) == doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("stationary") {
    const EntityTrack tr = linear_track(7, EntityClass::kBus, 0, 1, Vec2(10, 10), Vec2(0, 0), 90);
    CHECK(vehicle_speed(tr, 0.2, 0.8, kKb, 0.02) == 0.0);
  }
  SUBCASE("t2 must follow t1") {
    const EntityTrack tr = linear_track(7, EntityClass::kBus, 0, 1, Vec2(10, 10), Vec2(0, 0), 90);
    CHECK_THROWS_AS(vehicle_speed(tr, 0.5, 0.5, kKb, 0.02), DataError);
  }
}

TEST_CASE("property: speeds are invariant under uniform pixel rescaling") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uni(-200.0, 200.0);
  std::uniform_real_distribution<double> scale(0.2, 7.0);
  for (int i = 0; i < 100; ++i) {
    const EntityTrack ped = linear_track(1, EntityClass::kPerson, 0, 2, Vec2(300, 300),
                                         Vec2(uni(rng), uni(rng)), 60 + std::abs(uni(rng)));
    const EntityTrack car = linear_track(2, EntityClass::kTruck, 0, 2, Vec2(300, 300),
                                         Vec2(uni(rng), uni(rng)), 60 + std::abs(uni(rng)));
    const double k = scale(rng);
    const double ps = pedestrian_speed(ped, 0.4, 1.4, kKb, 0.02);
    const double vs = vehicle_speed(car, 0.4, 1.4, kKb, 0.02);
    CHECK(pedestrian_speed(scaled(ped, k), 0.4, 1.4, kKb, 0.02) == doctest::Approx(ps).epsilon(1e-12));
    CHECK(vehicle_speed(scaled(car, k), 0.4, 1.4, kKb, 0.02) == doctest::Approx(vs).epsilon(1e-12));
  }
}

TEST_CASE("config overrides") {
  const auto kb = knowledge_base_from_json({{"Person", 1.8}});
  CHECK(kb.mean_height(EntityClass::kPerson) == 1.8);
  CHECK(kb.mean_height(EntityClass::kBus) == 2.5);
  CHECK_THROWS_AS(knowledge_base_from_json({{"Car", -1.0}}), DataError);
  const auto n = normalization_from_json({{"distance_norm", "div"}, {"group", 5.0}});
  CHECK(n.distance_norm == DistanceNorm::kDiv);
  CHECK(n.group == 5.0);
  CHECK_THROWS_AS(normalization_from_json({{"distance_norm", "log"}}), DataError);
  CHECK(normalization_from_json(to_json(n)).group == 5.0);
}
