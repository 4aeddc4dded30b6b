#include "bbr/metrics.hpp"

#include <stdexcept>

namespace bbr {

bool pointing_hit(const Heatmap& m, const BoxSet& gt) {
  if (gt.empty()) throw std::invalid_argument("empty ground truth");
  int best_x = 0, best_y = 0;
  float best = m.at(0, 0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y) > best) {
        best = m.at(x, y);
        best_x = x;
        best_y = y;
      }
    }
  }
  const double px = (best_x + 0.5) / m.width;
  const double py = (best_y + 0.5) / m.height;
  for (const ScoredBox& g : gt) {
    const Corners c = to_corners(g.box);
    if (px >= c.x0 && px <= c.x1 && py >= c.y0 && py <= c.y1) return true;
  }
  return false;
}

bool bbox_hit(const Box& pred, const BoxSet& gt) {
  if (gt.empty()) throw std::invalid_argument("empty ground truth");
  for (const ScoredBox& g : gt) {
    if (iou(pred, g.box) > 0.5) return true;
  }
  return false;
}

bool corloc_hit(const Box& pred, const BoxSet& gt) { return bbox_hit(pred, gt); }

EvalReport evaluate(const std::vector<EvalSample>& samples, Metric which) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  EvalReport report;
  for (const EvalSample& s : samples) {
    bool hit = false;
    if (which == Metric::Pointing) {
      if (!s.heatmap) throw std::invalid_argument("pointing metric needs heatmap predictions");
      hit = pointing_hit(*s.heatmap, s.ground_truth);
    } else {
      std::optional<Box> pred = s.box;
      if (!pred && s.heatmap) {
        try {
          pred = enclosing_prediction_box(*s.heatmap);
        } catch (const std::runtime_error&) {
          pred.reset();  // empty extraction counts as a miss
        }
      }
      if (!pred && !s.heatmap) throw std::invalid_argument("sample has no prediction");
      hit = pred.has_value() && bbox_hit(*pred, s.ground_truth);
    }
    report.per_sample.emplace_back(s.id, hit);
    report.hits += hit ? 1 : 0;
    ++report.total;
  }
  report.accuracy = static_cast<double>(report.hits) / report.total;
  return report;
}

}  // namespace bbr
