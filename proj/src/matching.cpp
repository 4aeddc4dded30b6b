#include "bbr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bbr {

namespace {

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double l1_distance(const Box& a, const Box& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) +
         std::abs(a.h - b.h);
}

// Jonker-Volgenant style shortest augmenting path, O(n^3).
// Returns (row -> column) assignment and the optimal total cost.
std::pair<std::vector<int>, double> solve_assignment(
    const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  double cost = 0.0;
  for (int j = 1; j <= n; ++j) {
    row_to_col[p[j] - 1] = j - 1;
    cost += a[p[j] - 1][j - 1];
  }
  return {row_to_col, cost};
}

}  // namespace

std::vector<TargetBox> pad_targets(const BoxSet& targets, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<TargetBox> out;
  out.reserve(k);
  if (static_cast<int>(targets.size()) <= k) {
    for (const ScoredBox& t : targets) out.push_back({t.box, true});
    while (static_cast<int>(out.size()) < k) out.push_back({Box{}, false});
  } else {
    std::vector<size_t> order(targets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return targets[a].score > targets[b].score;
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    for (size_t i : order) out.push_back({targets[i].box, true});
  }
  return out;
}

double match_cost(const TargetBox& target, const PredBox& pred, const LossWeights& w) {
  const double p = clamp_prob(pred.objectness());
  if (!target.is_object) {
    return w.lambda_cls * -std::log(1.0 - p);
  }
  return w.lambda_cls * -std::log(p) + w.lambda_box * l1_distance(pred.box, target.box) +
         w.lambda_giou * (1.0 - giou(pred.box, target.box));
}

MatchResult hungarian(const std::vector<std::vector<double>>& cost) {
  const size_t n = cost.size();
  if (n == 0) throw std::invalid_argument("empty cost matrix");
  for (const auto& row : cost) {
    if (row.size() != n) throw std::invalid_argument("cost matrix must be square");
    for (double c : row) {
      if (!std::isfinite(c)) throw std::invalid_argument("cost matrix must be finite");
    }
  }

  auto [assign, best] = solve_assignment(cost);
  const double eps = 1e-9 * std::max(1.0, std::abs(best));

  // Refine to the lexicographically smallest optimal permutation by fixing
  // rows in order and testing each candidate column against the optimum.
  std::vector<int> fixed(n, -1);
  std::vector<char> col_used(n, 0);
  double fixed_cost = 0.0;
  for (size_t r = 0; r < n; ++r) {
    for (size_t c = 0; c < n; ++c) {
      if (col_used[c]) continue;
      if (r + 1 == n) {
        fixed[r] = static_cast<int>(c);
        col_used[c] = 1;
        fixed_cost += cost[r][c];
        break;
      }
      // optimum of the remaining subproblem with (r, c) forced
      std::vector<size_t> rows, cols;
      for (size_t i = r + 1; i < n; ++i) rows.push_back(i);
      for (size_t j = 0; j < n; ++j) {
        if (!col_used[j] && j != c) cols.push_back(j);
      }
      std::vector<std::vector<double>> sub(rows.size(), std::vector<double>(cols.size()));
      for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < cols.size(); ++j) sub[i][j] = cost[rows[i]][cols[j]];
      }
      double sub_best = 0.0;
      if (!sub.empty()) sub_best = solve_assignment(sub).second;
      if (fixed_cost + cost[r][c] + sub_best <= best + eps) {
        fixed[r] = static_cast<int>(c);
        col_used[c] = 1;
        fixed_cost += cost[r][c];
        break;
      }
    }
    if (fixed[r] < 0) throw std::logic_error("assignment refinement failed");
  }

  MatchResult result;
  result.target_of = std::move(fixed);
  result.total_cost = fixed_cost;
  return result;
}

LossBreakdown loss_given_match(const std::vector<TargetBox>& padded,
                               const std::vector<PredBox>& preds,
                               const MatchResult& match, const LossWeights& w) {
  const int k = static_cast<int>(preds.size());
  LossBreakdown lb;
  lb.weights = w;
  for (int i = 0; i < k; ++i) {
    const TargetBox& t = padded[match.target_of[i]];
    const double p = clamp_prob(preds[i].objectness());
    if (t.is_object) {
      lb.cls += -std::log(p);
      lb.box += l1_distance(preds[i].box, t.box);
      lb.giou += 1.0 - giou(preds[i].box, t.box);
    } else {
      lb.cls += -std::log(1.0 - p);
    }
  }
  lb.cls /= k;
  lb.box /= k;
  lb.giou /= k;
  lb.total = w.lambda_cls * lb.cls + w.lambda_box * lb.box + w.lambda_giou * lb.giou;
  return lb;
}

std::pair<LossBreakdown, MatchResult> loss_h(const BoxSet& targets,
                                             const std::vector<PredBox>& preds, int k,
                                             const LossWeights& w) {
  if (static_cast<int>(preds.size()) != k) {
    throw std::invalid_argument("prediction count must equal k");
  }
  const std::vector<TargetBox> padded = pad_targets(targets, k);
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) cost[i][j] = match_cost(padded[j], preds[i], w);
  }
  MatchResult match = hungarian(cost);
  LossBreakdown lb = loss_given_match(padded, preds, match, w);
  return {lb, std::move(match)};
}

std::pair<LossBreakdown, bool> loss_h_bu(const BoxSet& targets,
                                         const std::vector<PredBox>& preds, int k,
                                         const LossWeights& w, RngState& rng) {
  if (targets.empty()) throw std::invalid_argument("empty target set");
  const double p = rng.next_uniform();
  const bool use_union = p >= 0.5;
  if (use_union) {
    BoxSet bu{{union_box(targets), 1.0}};
    return {loss_h(bu, preds, k, w).first, true};
  }
  return {loss_h(targets, preds, k, w).first, false};
}

namespace {

// d(giou)/d(cx, cy, w, h) of the first box, holding the second fixed.
std::array<double, 4> giou_grad(const Box& pred, const Box& target) {
  const Corners p = to_corners(pred);
  const Corners t = to_corners(target);

  const double iw = std::min(p.x1, t.x1) - std::max(p.x0, t.x0);
  const double ih = std::min(p.y1, t.y1) - std::max(p.y0, t.y0);
  const bool has_inter = iw > 0.0 && ih > 0.0;
  const double inter = has_inter ? iw * ih : 0.0;
  const double area_p = (p.x1 - p.x0) * (p.y1 - p.y0);
  const double area_t = (t.x1 - t.x0) * (t.y1 - t.y0);
  const double uni = area_p + area_t - inter;
  const double ew = std::max(p.x1, t.x1) - std::min(p.x0, t.x0);
  const double eh = std::max(p.y1, t.y1) - std::min(p.y0, t.y0);
  const double enc = ew * eh;
  if (uni <= 0.0 || enc <= 0.0) return {0.0, 0.0, 0.0, 0.0};

  // derivatives with respect to pred corners (x0, y0, x1, y1)
  double dI[4] = {0, 0, 0, 0};
  if (has_inter) {
    dI[0] = (p.x0 > t.x0) ? -ih : 0.0;
    dI[2] = (p.x1 < t.x1) ? ih : 0.0;
    dI[1] = (p.y0 > t.y0) ? -iw : 0.0;
    dI[3] = (p.y1 < t.y1) ? iw : 0.0;
  }
  const double pw = p.x1 - p.x0;
  const double ph = p.y1 - p.y0;
  const double dA[4] = {-ph, -pw, ph, pw};
  double dU[4], dE[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4; ++i) dU[i] = dA[i] - dI[i];
  dE[0] = (p.x0 < t.x0) ? -eh : 0.0;
  dE[2] = (p.x1 > t.x1) ? eh : 0.0;
  dE[1] = (p.y0 < t.y0) ? -ew : 0.0;
  dE[3] = (p.y1 > t.y1) ? ew : 0.0;

  // giou = I/U - 1 + U/E
  double dg[4];
  for (int i = 0; i < 4; ++i) {
    dg[i] = (dI[i] * uni - inter * dU[i]) / (uni * uni) +
            (dU[i] * enc - uni * dE[i]) / (enc * enc);
  }
  // chain corners -> (cx, cy, w, h)
  return {
      dg[0] + dg[2],
      dg[1] + dg[3],
      -0.5 * dg[0] + 0.5 * dg[2],
      -0.5 * dg[1] + 0.5 * dg[3],
  };
}

double sign_of(double x) { return (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<PredGrad> grad_loss_h(const BoxSet& targets, const std::vector<PredBox>& preds,
                                  int k, const LossWeights& w) {
  const auto [lb, match] = loss_h(targets, preds, k, w);
  (void)lb;
  const std::vector<TargetBox> padded = pad_targets(targets, k);
  std::vector<PredGrad> grads(preds.size(), PredGrad{});
  for (int i = 0; i < k; ++i) {
    const TargetBox& t = padded[match.target_of[i]];
    const PredBox& pr = preds[i];
    PredGrad& g = grads[i];
    const double p_raw = pr.objectness();
    const bool clamped = p_raw <= kProbClamp || p_raw >= 1.0 - kProbClamp;
    const double p = clamp_prob(p_raw);
    if (t.is_object) {
      if (!clamped) {
        // -log(p), p = sigmoid(l_obj - l_noobj)
        g[4] += w.lambda_cls * -(1.0 - p) / k;
        g[5] += w.lambda_cls * (1.0 - p) / k;
      }
      g[0] += w.lambda_box * sign_of(pr.box.cx - t.box.cx) / k;
      g[1] += w.lambda_box * sign_of(pr.box.cy - t.box.cy) / k;
      g[2] += w.lambda_box * sign_of(pr.box.w - t.box.w) / k;
      g[3] += w.lambda_box * sign_of(pr.box.h - t.box.h) / k;
      const std::array<double, 4> dg = giou_grad(pr.box, t.box);
      for (int j = 0; j < 4; ++j) g[j] += w.lambda_giou * -dg[j] / k;
    } else if (!clamped) {
      g[4] += w.lambda_cls * p / k;
      g[5] += w.lambda_cls * -p / k;
    }
  }
  return grads;
}

double finite_diff_check(const BoxSet& targets, const std::vector<PredBox>& preds, int k,
                         const LossWeights& w, double step) {
  if (step <= 0.0) throw std::invalid_argument("step must be > 0");
  const auto [lb0, match] = loss_h(targets, preds, k, w);
  (void)lb0;
  const std::vector<TargetBox> padded = pad_targets(targets, k);
  const std::vector<PredGrad> analytic = grad_loss_h(targets, preds, k, w);

  auto eval = [&](const std::vector<PredBox>& ps) {
    return loss_given_match(padded, ps, match, w).total;
  };

  double worst = 0.0;
  for (int i = 0; i < k; ++i) {
    const TargetBox& t = padded[match.target_of[i]];
    const Corners pc = to_corners(preds[i].box);
    const Corners tc = to_corners(t.box);
    const double margin = 2.0 * step;

    const bool x_kink =
        t.is_object &&
        (std::abs(pc.x0 - tc.x0) < margin || std::abs(pc.x1 - tc.x1) < margin ||
         std::abs(pc.x0 - tc.x1) < margin || std::abs(pc.x1 - tc.x0) < margin ||
         std::abs(preds[i].box.cx - t.box.cx) < margin ||
         std::abs(preds[i].box.w - t.box.w) < margin);
    const bool y_kink =
        t.is_object &&
        (std::abs(pc.y0 - tc.y0) < margin || std::abs(pc.y1 - tc.y1) < margin ||
         std::abs(pc.y0 - tc.y1) < margin || std::abs(pc.y1 - tc.y0) < margin ||
         std::abs(preds[i].box.cy - t.box.cy) < margin ||
         std::abs(preds[i].box.h - t.box.h) < margin);
    const double p = preds[i].objectness();
    const bool prob_edge = p < 1e-6 || p > 1.0 - 1e-6;

    for (int j = 0; j < 6; ++j) {
      if ((j == 0 || j == 2) && x_kink) continue;
      if ((j == 1 || j == 3) && y_kink) continue;
      if (j >= 4 && prob_edge) continue;

      auto nudge = [&](double delta) {
        std::vector<PredBox> ps = preds;
        switch (j) {
          case 0: ps[i].box.cx += delta; break;
          case 1: ps[i].box.cy += delta; break;
          case 2: ps[i].box.w += delta; break;
          case 3: ps[i].box.h += delta; break;
          case 4: ps[i].logit_obj += delta; break;
          default: ps[i].logit_noobj += delta; break;
        }
        return eval(ps);
      };
      const double numeric = (nudge(step) - nudge(-step)) / (2.0 * step);
      const double ana = analytic[i][j];
      const double denom = std::max(std::abs(ana), std::abs(numeric));
      const double err = (denom < 1e-6) ? std::abs(ana - numeric)
                                        : std::abs(ana - numeric) / denom;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace bbr
