#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bbr/geometry.hpp"

namespace bbr {

// Dense single-channel localization map with values in [0,1].
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, height x width

  float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
};

Heatmap make_heatmap(int width, int height, float fill = 0.0f);

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // row-major

  bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
};

struct PixelPoint {
  int x = 0;
  int y = 0;
};

// Outer border of one 8-connected foreground component.
struct Contour {
  std::vector<PixelPoint> points;
  int component_id = 0;
};

enum class ScoreMode { MeanInBox, SumInContour };

struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // 0 = background
  int count = 0;
};

// Keep pixels with value >= ratio * max(M).
BinaryMask binarize(const Heatmap& m, double ratio = 0.5);

// Deterministic labels in raster-scan first-encounter order, starting at 1.
LabelMap connected_components(const BinaryMask& mask, int connectivity);

std::vector<Contour> trace_contours(const BinaryMask& mask);

std::vector<ScoredBox> boxes_from_contours(const std::vector<Contour>& contours,
                                           const Heatmap& m, ScoreMode mode);

// Greedy NMS: score-ratio prefilter, then suppression at IoU >= iou_thresh
// in descending score order (ties by input index).
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes,
                           double iou_thresh = 0.05, double score_ratio = 0.5);

// Teacher pipeline: binarize -> contours -> mean-in-box scoring -> nms.
BoxSet extract_boxes(const Heatmap& m);

// Metric-time variant: sum-in-contour scoring, then the union of survivors.
Box enclosing_prediction_box(const Heatmap& m);

}  // namespace bbr
