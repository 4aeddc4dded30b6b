#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "bbr/geometry.hpp"
#include "bbr/rng.hpp"

namespace bbr {

struct LossWeights {
  double lambda_cls = 2.0;
  double lambda_box = 5.0;
  double lambda_giou = 2.0;
};

struct MatchResult {
  // target_of[i] is the target index assigned to prediction i.
  std::vector<int> target_of;
  double total_cost = 0.0;
};

struct LossBreakdown {
  double cls = 0.0;
  double box = 0.0;
  double giou = 0.0;
  double total = 0.0;
  LossWeights weights;
};

// Gradient of the weighted total with respect to one prediction's
// (cx, cy, w, h, logit_obj, logit_noobj).
using PredGrad = std::array<double, 6>;

constexpr double kProbClamp = 1e-7;

// Pad with no-object zeros up to k, or keep the k highest-scored targets.
std::vector<TargetBox> pad_targets(const BoxSet& targets, int k);

double match_cost(const TargetBox& target, const PredBox& pred, const LossWeights& w);

// Minimal-cost assignment over a square matrix; among optima returns the
// lexicographically smallest row->column permutation.
MatchResult hungarian(const std::vector<std::vector<double>>& cost);

std::pair<LossBreakdown, MatchResult> loss_h(const BoxSet& targets,
                                             const std::vector<PredBox>& preds, int k,
                                             const LossWeights& w);

// With probability 0.5 the target set is collapsed to its union box.
std::pair<LossBreakdown, bool> loss_h_bu(const BoxSet& targets,
                                         const std::vector<PredBox>& preds, int k,
                                         const LossWeights& w, RngState& rng);

// Analytic gradients with the Hungarian assignment held fixed.
std::vector<PredGrad> grad_loss_h(const BoxSet& targets, const std::vector<PredBox>& preds,
                                  int k, const LossWeights& w);

// Loss evaluated under a frozen assignment (used for finite differencing).
LossBreakdown loss_given_match(const std::vector<TargetBox>& padded,
                               const std::vector<PredBox>& preds,
                               const MatchResult& match, const LossWeights& w);

// Central-difference check of grad_loss_h; returns the worst relative error,
// skipping parameters within 2*step of an L1 or min/max kink.
double finite_diff_check(const BoxSet& targets, const std::vector<PredBox>& preds, int k,
                         const LossWeights& w, double step);

}  // namespace bbr
