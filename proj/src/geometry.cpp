#include "bbr/geometry.hpp"

#include <algorithm>

namespace bbr {

namespace {

double intersection_area(const Corners& a, const Corners& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double inter = intersection_area(ca, cb);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const Box& a, const Box& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double ew = std::max(ca.x1, cb.x1) - std::min(ca.x0, cb.x0);
  const double eh = std::max(ca.y1, cb.y1) - std::min(ca.y0, cb.y0);
  const double enclose = ew * eh;
  if (enclose <= 0.0) return 0.0;
  const double inter = intersection_area(ca, cb);
  const double uni = area(a) + area(b) - inter;
  const double i = (uni > 0.0) ? inter / uni : 0.0;
  return i - (enclose - uni) / enclose;
}

Box union_box(const BoxSet& boxes) {
  if (boxes.empty()) throw std::invalid_argument("empty box set");
  Corners acc = to_corners(boxes.front().box);
  for (size_t i = 1; i < boxes.size(); ++i) {
    const Corners c = to_corners(boxes[i].box);
    acc.x0 = std::min(acc.x0, c.x0);
    acc.y0 = std::min(acc.y0, c.y0);
    acc.x1 = std::max(acc.x1, c.x1);
    acc.y1 = std::max(acc.y1, c.y1);
  }
  return from_corners(acc.x0, acc.y0, acc.x1, acc.y1);
}

}  // namespace bbr
