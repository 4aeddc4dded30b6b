#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace bbr {

// Axis-aligned box in normalized center/size form.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct Corners {
  double x0, y0, x1, y1;
};

inline Corners to_corners(const Box& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

inline Box from_corners(double x0, double y0, double x1, double y1) {
  return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
}

inline double area(const Box& b) { return b.w * b.h; }

double iou(const Box& a, const Box& b);

// iou minus the enclosing-box penalty; in (-1, 1]. Degenerate
// coincident zero-area boxes map to 0.
double giou(const Box& a, const Box& b);

struct ScoredBox {
  Box box;
  double score = 0.0;
};

using BoxSet = std::vector<ScoredBox>;

// Prediction with a two-logit objectness head.
struct PredBox {
  Box box;
  double logit_obj = 0.0;
  double logit_noobj = 0.0;

  double objectness() const {
    // softmax over two logits, stable form
    return 1.0 / (1.0 + std::exp(logit_noobj - logit_obj));
  }
};

struct TargetBox {
  Box box;
  bool is_object = false;
};

// Minimal axis-aligned box containing every box in the set.
Box union_box(const BoxSet& boxes);

}  // namespace bbr
