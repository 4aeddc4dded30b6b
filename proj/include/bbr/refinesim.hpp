#pragma once

#include <array>
#include <vector>

#include "bbr/geometry.hpp"
#include "bbr/heatmap.hpp"
#include "bbr/matching.hpp"

namespace bbr {

struct GaussianBlob {
  double mu_x = 0.5;
  double mu_y = 0.5;
  double sigma_x = 0.1;
  double sigma_y = 0.1;
  double amplitude = 1.0;
};

using BlobParams = std::vector<GaussianBlob>;

// Moment-to-box calibration of the differentiable box predictor.
// Defaults map the mean to the center and 2*sqrt(3)*std to the size,
// so a uniform map yields the full-frame box.
struct Calibration {
  std::array<double, 4> scale{1.0, 1.0, 2.0 * 1.7320508075688772, 2.0 * 1.7320508075688772};
  std::array<double, 4> offset{0.0, 0.0, 0.0, 0.0};
};

struct Schedule {
  int phase1_iters = 300;
  int phase2_iters = 1000;
  double lr_phase1 = 0.05;
  double lr_phase2 = 0.002;
  uint64_t seed = 0;
};

struct RenderResult {
  Heatmap map;
  std::vector<uint8_t> saturated;  // raw sum exceeded 1 at this pixel
};

Heatmap render(const BlobParams& params, int width, int height);
RenderResult render_with_mask(const BlobParams& params, int width, int height);

struct SoftBoxResult {
  PredBox pred;
  double mean_x = 0, mean_y = 0, std_x = 0, std_y = 0, total_mass = 0;
};

// Differentiable mass-moment box predictor.
SoftBoxResult soft_boxes_full(const Heatmap& m, const Calibration& calib);
PredBox soft_boxes(const Heatmap& m, const Calibration& calib);

// d(cx,cy,w,h,l_obj,l_noobj)/d(map value), one row per output.
std::array<std::vector<double>, 6> soft_boxes_jacobian(const Heatmap& m,
                                                       const Calibration& calib);

// mean squared difference between two maps of equal dims
double reg_loss_f(const Heatmap& m, const Heatmap& m0);

struct Phase1Result {
  Calibration calib;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Fit the calibration against teacher boxes from extract_boxes.
Phase1Result phase1_fit(const std::vector<Heatmap>& dataset, const Calibration& init,
                        const Schedule& schedule, const LossWeights& w = {});

struct Phase2Result {
  BlobParams params;
  std::vector<double> trace;  // total loss per iteration, plus the final value
};

// Refine blob parameters against a frozen calibration: gradient descent on
// the union-branch detection loss plus reg_weight times the map regularizer.
Phase2Result phase2_refine(const BlobParams& init, const BoxSet& teacher,
                           const Calibration& calib, const Schedule& schedule,
                           double reg_weight, int width, int height,
                           const LossWeights& w = {});

}  // namespace bbr
