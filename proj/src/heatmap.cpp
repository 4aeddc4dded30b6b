#include "bbr/heatmap.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace bbr {

namespace {

// Clockwise Moore neighborhood in image coordinates (y grows downward).
constexpr int kDx8[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy8[8] = {0, 1, 1, 1, 0, -1, -1, -1};

constexpr int kDx4[4] = {1, 0, -1, 0};
constexpr int kDy4[4] = {0, 1, 0, -1};

int direction_index(int dx, int dy) {
  for (int d = 0; d < 8; ++d) {
    if (kDx8[d] == dx && kDy8[d] == dy) return d;
  }
  throw std::logic_error("not a Moore neighbor");
}

}  // namespace

Heatmap make_heatmap(int width, int height, float fill) {
  if (width < 1 || height < 1) throw std::invalid_argument("heatmap dims must be >= 1");
  Heatmap m;
  m.width = width;
  m.height = height;
  m.values.assign(static_cast<size_t>(width) * height, fill);
  return m;
}

BinaryMask binarize(const Heatmap& m, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("binarize ratio must be in (0,1]");
  BinaryMask mask;
  mask.width = m.width;
  mask.height = m.height;
  mask.bits.assign(m.values.size(), 0);
  const float maxv = *std::max_element(m.values.begin(), m.values.end());
  if (maxv <= 0.0f) return mask;  // all-zero map -> all-false mask
  const double thresh = ratio * maxv;
  for (size_t i = 0; i < m.values.size(); ++i) {
    mask.bits[i] = (m.values[i] >= thresh) ? 1 : 0;
  }
  return mask;
}

LabelMap connected_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("connectivity must be 4 or 8");
  }
  LabelMap lm;
  lm.width = mask.width;
  lm.height = mask.height;
  lm.labels.assign(mask.bits.size(), 0);
  const int ndirs = (connectivity == 4) ? 4 : 8;
  const int* dx = (connectivity == 4) ? kDx4 : kDx8;
  const int* dy = (connectivity == 4) ? kDy4 : kDy8;

  int next_label = 0;
  std::deque<PixelPoint> queue;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y) || lm.labels[static_cast<size_t>(y) * mask.width + x] != 0) continue;
      ++next_label;
      lm.labels[static_cast<size_t>(y) * mask.width + x] = next_label;
      queue.push_back({x, y});
      while (!queue.empty()) {
        const PixelPoint p = queue.front();
        queue.pop_front();
        for (int d = 0; d < ndirs; ++d) {
          const int nx = p.x + dx[d];
          const int ny = p.y + dy[d];
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
          const size_t idx = static_cast<size_t>(ny) * mask.width + nx;
          if (mask.bits[idx] && lm.labels[idx] == 0) {
            lm.labels[idx] = next_label;
            queue.push_back({nx, ny});
          }
        }
      }
    }
  }
  lm.count = next_label;
  return lm;
}

std::vector<Contour> trace_contours(const BinaryMask& mask) {
  const LabelMap lm = connected_components(mask, 8);
  std::vector<Contour> contours;
  contours.reserve(lm.count);
  std::vector<bool> seen(static_cast<size_t>(lm.count) + 1, false);

  auto label_at = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) return 0;
    return lm.labels[static_cast<size_t>(y) * mask.width + x];
  };

  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int label = label_at(x, y);
      if (label == 0 || seen[label]) continue;
      seen[label] = true;

      // Moore-neighbor tracing from the raster-first pixel of the component.
      // Its west neighbor is background: a same-label pixel there would have
      // been visited first, and a different label cannot be 8-adjacent.
      Contour c;
      c.component_id = label;
      const PixelPoint start{x, y};
      c.points.push_back(start);

      bool isolated = true;
      for (int d = 0; d < 8; ++d) {
        if (label_at(x + kDx8[d], y + kDy8[d]) == label) {
          isolated = false;
          break;
        }
      }
      if (isolated) {
        contours.push_back(std::move(c));
        continue;
      }

      const int start_back = 4;  // west
      PixelPoint cur = start;
      int back = start_back;
      const size_t max_steps = 4 * mask.bits.size() + 8;
      for (size_t step = 0; step < max_steps; ++step) {
        PixelPoint next{};
        int next_back = -1;
        for (int i = 1; i <= 8; ++i) {
          const int d = (back + i) % 8;
          const int nx = cur.x + kDx8[d];
          const int ny = cur.y + kDy8[d];
          if (label_at(nx, ny) == label) {
            next = {nx, ny};
            const int lastd = (i == 1) ? back : (back + i - 1) % 8;
            const PixelPoint lastbg{cur.x + kDx8[lastd], cur.y + kDy8[lastd]};
            next_back = direction_index(lastbg.x - next.x, lastbg.y - next.y);
            break;
          }
        }
        cur = next;
        back = next_back;
        if (cur.x == start.x && cur.y == start.y && back == start_back) break;
        c.points.push_back(cur);
      }
      contours.push_back(std::move(c));
    }
  }
  return contours;
}

namespace {

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive
};

PixelRect contour_bounds(const Contour& c) {
  PixelRect r{c.points[0].x, c.points[0].y, c.points[0].x, c.points[0].y};
  for (const PixelPoint& p : c.points) {
    r.x0 = std::min(r.x0, p.x);
    r.y0 = std::min(r.y0, p.y);
    r.x1 = std::max(r.x1, p.x);
    r.y1 = std::max(r.y1, p.y);
  }
  return r;
}

double sum_inside_contour(const Contour& c, const Heatmap& m, const PixelRect& r) {
  // Flood from a one-pixel pad around the bounding box; cells the flood
  // cannot reach without crossing the contour are inside it.
  const int bw = r.x1 - r.x0 + 3;
  const int bh = r.y1 - r.y0 + 3;
  std::vector<uint8_t> boundary(static_cast<size_t>(bw) * bh, 0);
  std::vector<uint8_t> outside(static_cast<size_t>(bw) * bh, 0);
  auto idx = [&](int lx, int ly) { return static_cast<size_t>(ly) * bw + lx; };
  for (const PixelPoint& p : c.points) {
    boundary[idx(p.x - r.x0 + 1, p.y - r.y0 + 1)] = 1;
  }
  std::deque<PixelPoint> queue;
  queue.push_back({0, 0});
  outside[0] = 1;
  while (!queue.empty()) {
    const PixelPoint p = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const int nx = p.x + kDx4[d];
      const int ny = p.y + kDy4[d];
      if (nx < 0 || ny < 0 || nx >= bw || ny >= bh) continue;
      const size_t i = idx(nx, ny);
      if (!outside[i] && !boundary[i]) {
        outside[i] = 1;
        queue.push_back({nx, ny});
      }
    }
  }
  double sum = 0.0;
  for (int ly = 1; ly < bh - 1; ++ly) {
    for (int lx = 1; lx < bw - 1; ++lx) {
      if (!outside[idx(lx, ly)]) {
        sum += m.at(lx + r.x0 - 1, ly + r.y0 - 1);
      }
    }
  }
  return sum;
}

}  // namespace

std::vector<ScoredBox> boxes_from_contours(const std::vector<Contour>& contours,
                                           const Heatmap& m, ScoreMode mode) {
  std::vector<ScoredBox> out;
  out.reserve(contours.size());
  for (const Contour& c : contours) {
    if (c.points.empty()) continue;
    const PixelRect r = contour_bounds(c);
    ScoredBox sb;
    sb.box = from_corners(static_cast<double>(r.x0) / m.width,
                          static_cast<double>(r.y0) / m.height,
                          static_cast<double>(r.x1 + 1) / m.width,
                          static_cast<double>(r.y1 + 1) / m.height);
    if (mode == ScoreMode::MeanInBox) {
      double sum = 0.0;
      for (int y = r.y0; y <= r.y1; ++y) {
        for (int x = r.x0; x <= r.x1; ++x) sum += m.at(x, y);
      }
      sb.score = sum / (static_cast<double>(r.x1 - r.x0 + 1) * (r.y1 - r.y0 + 1));
    } else {
      sb.score = sum_inside_contour(c, m, r);
    }
    out.push_back(sb);
  }
  return out;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes, double iou_thresh,
                           double score_ratio) {
  if (boxes.empty()) return {};
  double max_score = boxes[0].score;
  for (const ScoredBox& b : boxes) max_score = std::max(max_score, b.score);

  std::vector<size_t> order;
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].score >= score_ratio * max_score) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return boxes[a].score > boxes[b].score;
  });

  std::vector<ScoredBox> kept;
  for (size_t i : order) {
    bool suppressed = false;
    for (const ScoredBox& k : kept) {
      if (iou(boxes[i].box, k.box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(boxes[i]);
  }
  return kept;
}

BoxSet extract_boxes(const Heatmap& m) {
  const BinaryMask mask = binarize(m, 0.5);
  const std::vector<Contour> contours = trace_contours(mask);
  const std::vector<ScoredBox> scored = boxes_from_contours(contours, m, ScoreMode::MeanInBox);
  return nms(scored);
}

Box enclosing_prediction_box(const Heatmap& m) {
  const BinaryMask mask = binarize(m, 0.5);
  const std::vector<Contour> contours = trace_contours(mask);
  const std::vector<ScoredBox> scored = boxes_from_contours(contours, m, ScoreMode::SumInContour);
  const std::vector<ScoredBox> kept = nms(scored);
  if (kept.empty()) throw std::runtime_error("empty prediction");
  return union_box(kept);
}

}  // namespace bbr
