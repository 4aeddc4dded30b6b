#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bbr/geometry.hpp"
#include "bbr/heatmap.hpp"

namespace bbr {

enum class Metric { Pointing, BBox, CorLoc };

struct EvalSample {
  std::string id;
  std::optional<Heatmap> heatmap;  // exactly one of heatmap/box is set
  std::optional<Box> box;
  BoxSet ground_truth;
};

struct EvalReport {
  int hits = 0;
  int total = 0;
  double accuracy = 0.0;
  std::vector<std::pair<std::string, bool>> per_sample;
};

// true iff the pixel center of the first row-major maximum lies inside
// any ground-truth box (inclusive edges)
bool pointing_hit(const Heatmap& m, const BoxSet& gt);

// strict: max IoU against the annotations must exceed 0.5
bool bbox_hit(const Box& pred, const BoxSet& gt);
bool corloc_hit(const Box& pred, const BoxSet& gt);

// Heatmap predictions are converted with enclosing_prediction_box before
// the box metrics; an empty extraction counts as a miss.
EvalReport evaluate(const std::vector<EvalSample>& samples, Metric which);

}  // namespace bbr
