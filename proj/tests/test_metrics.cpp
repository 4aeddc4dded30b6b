#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bbr/metrics.hpp"

using namespace bbr;

namespace {

Heatmap map_with_max_at(int w, int h, int mx, int my) {
  Heatmap m = make_heatmap(w, h, 0.1f);
  m.at(mx, my) = 1.0f;
  return m;
}

BoxSet gt(std::initializer_list<Box> boxes) {
  BoxSet out;
  for (const Box& b : boxes) out.push_back({b, 1.0});
  return out;
}

}  // namespace

TEST_CASE("pointing_hit") {
  SUBCASE("max inside a box") {
    const Heatmap m = map_with_max_at(10, 10, 3, 4);
    // pixel center (0.35, 0.45) inside corners (0.2, 0.3, 0.5, 0.6)
    CHECK(pointing_hit(m, gt({from_corners(0.2, 0.3, 0.5, 0.6)})));
  }
  SUBCASE("max outside all boxes") {
    const Heatmap m = map_with_max_at(10, 10, 9, 9);
    CHECK_FALSE(pointing_hit(m, gt({from_corners(0.2, 0.3, 0.5, 0.6)})));
  }
  SUBCASE("constant map breaks ties to the first pixel") {
    const Heatmap m = make_heatmap(10, 10, 0.5f);
    CHECK(pointing_hit(m, gt({from_corners(0.0, 0.0, 0.1, 0.1)})));
    CHECK_FALSE(pointing_hit(m, gt({from_corners(0.5, 0.5, 1.0, 1.0)})));
  }
}

TEST_CASE("bbox_hit and corloc_hit") {
  SUBCASE("IoU just above 0.5 hits") {
    // (0,0,2,2) vs (0,0,2,2.1) scaled into the unit square: IoU = 4/4.2
    const Box pred = from_corners(0.0, 0.0, 0.5, 0.5);
    const Box g = from_corners(0.0, 0.0, 0.5, 0.525);
    CHECK(iou(pred, g) == doctest::Approx(4.0 / 4.2));
    CHECK(bbox_hit(pred, gt({g})));
  }
  SUBCASE("IoU exactly 0.5 misses") {
    const Box pred = from_corners(0.0, 0.0, 0.5, 0.25);
    const Box g = from_corners(0.0, 0.0, 0.5, 0.5);
    CHECK(iou(pred, g) == doctest::Approx(0.5));
    CHECK_FALSE(bbox_hit(pred, gt({g})));
  }
  SUBCASE("disjoint misses") {
    CHECK_FALSE(bbox_hit(from_corners(0, 0, 0.2, 0.2), gt({from_corners(0.5, 0.5, 1, 1)})));
  }
  SUBCASE("any annotation can match") {
    const Box pred = from_corners(0.6, 0.6, 0.9, 0.9);
    const BoxSet g = gt({from_corners(0.0, 0.0, 0.2, 0.2), from_corners(0.6, 0.6, 0.9, 0.9)});
    CHECK(bbox_hit(pred, g));
    BoxSet reversed = {g[1], g[0]};
    CHECK(bbox_hit(pred, reversed));
  }
  SUBCASE("corloc is the same predicate") {
    const Box pred = from_corners(0.1, 0.1, 0.45, 0.45);
    const BoxSet g = gt({from_corners(0.1, 0.1, 0.5, 0.5)});
    CHECK(corloc_hit(pred, g) == bbox_hit(pred, g));
  }
}

TEST_CASE("evaluate on a 20-sample fixture") {
  // 12 box samples: i = 0..7 exact matches (hit), i = 8..11 disjoint (miss)
  // 8 heatmap samples: i = 12..15 plateau matching gt (hit),
  //                    i = 16..19 plateau away from gt (miss)
  std::vector<EvalSample> box_samples;
  for (int i = 0; i < 12; ++i) {
    EvalSample s;
    s.id = "box" + std::to_string(i);
    const Box g = from_corners(0.1, 0.1, 0.4, 0.4);
    s.ground_truth = gt({g});
    s.box = (i < 8) ? g : from_corners(0.6, 0.6, 0.9, 0.9);
    box_samples.push_back(std::move(s));
  }
  std::vector<EvalSample> hm_samples;
  for (int i = 0; i < 8; ++i) {
    EvalSample s;
    s.id = "hm" + std::to_string(i);
    Heatmap m = make_heatmap(20, 20);
    for (int y = 4; y < 10; ++y) {
      for (int x = 4; x < 10; ++x) m.at(x, y) = 1.0f;
    }
    s.heatmap = std::move(m);
    s.ground_truth =
        (i < 4) ? gt({from_corners(0.2, 0.2, 0.5, 0.5)}) : gt({from_corners(0.7, 0.7, 0.95, 0.95)});
    hm_samples.push_back(std::move(s));
  }

  SUBCASE("bbox accuracy over the box samples") {
    const EvalReport r = evaluate(box_samples, Metric::BBox);
    CHECK(r.hits == 8);
    CHECK(r.total == 12);
    CHECK(r.accuracy == doctest::Approx(8.0 / 12.0));
  }
  SUBCASE("corloc over the heatmap samples via enclosing box") {
    const EvalReport r = evaluate(hm_samples, Metric::CorLoc);
    CHECK(r.hits == 4);
    CHECK(r.total == 8);
    CHECK(r.accuracy == doctest::Approx(0.5));
  }
  SUBCASE("pointing over the heatmap samples") {
    const EvalReport r = evaluate(hm_samples, Metric::Pointing);
    CHECK(r.hits == 4);
    CHECK(r.accuracy == doctest::Approx(0.5));
  }
  SUBCASE("all hits give accuracy 1") {
    std::vector<EvalSample> hits(box_samples.begin(), box_samples.begin() + 8);
    CHECK(evaluate(hits, Metric::BBox).accuracy == 1.0);
  }
  SUBCASE("empty sample list errors") {
    CHECK_THROWS_AS(evaluate({}, Metric::BBox), std::invalid_argument);
  }
  SUBCASE("empty extraction counts as a miss") {
    EvalSample s;
    s.id = "empty";
    s.heatmap = make_heatmap(8, 8);  // all-zero map, no boxes
    s.ground_truth = gt({from_corners(0.1, 0.1, 0.5, 0.5)});
    const EvalReport r = evaluate({s}, Metric::BBox);
    CHECK(r.hits == 0);
    CHECK(r.per_sample[0].second == false);
  }
}
