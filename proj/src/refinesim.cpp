#include "bbr/refinesim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bbr {

namespace {

constexpr double kVarFloor = 1e-12;

double blob_value(const GaussianBlob& b, double x, double y) {
  const double dx = x - b.mu_x;
  const double dy = y - b.mu_y;
  return b.amplitude * std::exp(-(dx * dx / (2.0 * b.sigma_x * b.sigma_x) +
                                  dy * dy / (2.0 * b.sigma_y * b.sigma_y)));
}

}  // namespace

RenderResult render_with_mask(const BlobParams& params, int width, int height) {
  for (const GaussianBlob& b : params) {
    if (b.sigma_x <= 0.0 || b.sigma_y <= 0.0) {
      throw std::invalid_argument("blob sigma must be > 0");
    }
  }
  RenderResult out;
  out.map = make_heatmap(width, height);
  out.saturated.assign(out.map.values.size(), 0);
  for (int y = 0; y < height; ++y) {
    const double yc = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double xc = (x + 0.5) / width;
      double v = 0.0;
      for (const GaussianBlob& b : params) v += blob_value(b, xc, yc);
      const size_t i = static_cast<size_t>(y) * width + x;
      if (v > 1.0) {
        out.saturated[i] = 1;
        v = 1.0;
      }
      out.map.values[i] = static_cast<float>(v);
    }
  }
  return out;
}

Heatmap render(const BlobParams& params, int width, int height) {
  return render_with_mask(params, width, height).map;
}

SoftBoxResult soft_boxes_full(const Heatmap& m, const Calibration& calib) {
  double total = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  for (int y = 0; y < m.height; ++y) {
    const double yc = (y + 0.5) / m.height;
    for (int x = 0; x < m.width; ++x) {
      const double xc = (x + 0.5) / m.width;
      const double v = m.at(x, y);
      total += v;
      sx += v * xc;
      sy += v * yc;
      sxx += v * xc * xc;
      syy += v * yc * yc;
    }
  }
  if (total <= 0.0) throw std::runtime_error("zero-mass map");

  SoftBoxResult r;
  r.total_mass = total;
  r.mean_x = sx / total;
  r.mean_y = sy / total;
  r.std_x = std::sqrt(std::max(sxx / total - r.mean_x * r.mean_x, 0.0) + kVarFloor);
  r.std_y = std::sqrt(std::max(syy / total - r.mean_y * r.mean_y, 0.0) + kVarFloor);
  r.pred.box.cx = calib.scale[0] * r.mean_x + calib.offset[0];
  r.pred.box.cy = calib.scale[1] * r.mean_y + calib.offset[1];
  r.pred.box.w = calib.scale[2] * r.std_x + calib.offset[2];
  r.pred.box.h = calib.scale[3] * r.std_y + calib.offset[3];
  r.pred.logit_obj = std::log1p(total);
  r.pred.logit_noobj = 0.0;
  return r;
}

PredBox soft_boxes(const Heatmap& m, const Calibration& calib) {
  return soft_boxes_full(m, calib).pred;
}

std::array<std::vector<double>, 6> soft_boxes_jacobian(const Heatmap& m,
                                                       const Calibration& calib) {
  const SoftBoxResult r = soft_boxes_full(m, calib);
  const size_t npix = m.values.size();
  std::array<std::vector<double>, 6> jac;
  for (auto& row : jac) row.assign(npix, 0.0);

  for (int y = 0; y < m.height; ++y) {
    const double yc = (y + 0.5) / m.height;
    for (int x = 0; x < m.width; ++x) {
      const double xc = (x + 0.5) / m.width;
      const size_t i = static_cast<size_t>(y) * m.width + x;
      const double dmean_x = (xc - r.mean_x) / r.total_mass;
      const double dmean_y = (yc - r.mean_y) / r.total_mass;
      const double dvar_x =
          ((xc - r.mean_x) * (xc - r.mean_x) - (r.std_x * r.std_x - kVarFloor)) /
          r.total_mass;
      const double dvar_y =
          ((yc - r.mean_y) * (yc - r.mean_y) - (r.std_y * r.std_y - kVarFloor)) /
          r.total_mass;
      jac[0][i] = calib.scale[0] * dmean_x;
      jac[1][i] = calib.scale[1] * dmean_y;
      jac[2][i] = calib.scale[2] * dvar_x / (2.0 * r.std_x);
      jac[3][i] = calib.scale[3] * dvar_y / (2.0 * r.std_y);
      jac[4][i] = 1.0 / (1.0 + r.total_mass);
      // jac[5] stays 0: the no-object logit is constant
    }
  }
  return jac;
}

double reg_loss_f(const Heatmap& m, const Heatmap& m0) {
  if (m.width != m0.width || m.height != m0.height) {
    throw std::invalid_argument("heatmap dimension mismatch");
  }
  double sum = 0.0;
  for (size_t i = 0; i < m.values.size(); ++i) {
    const double d = static_cast<double>(m.values[i]) - m0.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(m.values.size());
}

Phase1Result phase1_fit(const std::vector<Heatmap>& dataset, const Calibration& init,
                        const Schedule& schedule, const LossWeights& w) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");

  std::vector<BoxSet> teachers;
  teachers.reserve(dataset.size());
  for (const Heatmap& m : dataset) {
    BoxSet b = extract_boxes(m);
    if (b.empty()) throw std::invalid_argument("heatmap yields no teacher boxes");
    teachers.push_back(std::move(b));
  }

  auto mean_loss = [&](const Calibration& c) {
    double sum = 0.0;
    for (size_t i = 0; i < dataset.size(); ++i) {
      const PredBox pred = soft_boxes(dataset[i], c);
      sum += loss_h(teachers[i], {pred}, 1, w).first.total;
    }
    return sum / dataset.size();
  };

  Phase1Result out;
  out.calib = init;
  out.initial_loss = mean_loss(init);
  Calibration cur = init;
  double best_loss = out.initial_loss;

  for (int it = 0; it < schedule.phase1_iters; ++it) {
    std::array<double, 8> grad{};
    for (size_t s = 0; s < dataset.size(); ++s) {
      const SoftBoxResult r = soft_boxes_full(dataset[s], cur);
      const std::vector<PredGrad> g = grad_loss_h(teachers[s], {r.pred}, 1, w);
      const double moments[4] = {r.mean_x, r.mean_y, r.std_x, r.std_y};
      for (int j = 0; j < 4; ++j) {
        grad[j] += g[0][j] * moments[j];  // d out_j / d scale_j
        grad[j + 4] += g[0][j];           // d out_j / d offset_j
      }
    }
    for (double& v : grad) v /= dataset.size();
    for (int j = 0; j < 4; ++j) {
      cur.scale[j] -= schedule.lr_phase1 * grad[j];
      cur.offset[j] -= schedule.lr_phase1 * grad[j + 4];
    }
    const double loss = mean_loss(cur);
    if (loss < best_loss) {
      best_loss = loss;
      out.calib = cur;
    }
  }
  out.final_loss = best_loss;
  return out;
}

Phase2Result phase2_refine(const BlobParams& init, const BoxSet& teacher,
                           const Calibration& calib, const Schedule& schedule,
                           double reg_weight, int width, int height,
                           const LossWeights& w) {
  if (teacher.empty()) throw std::invalid_argument("empty teacher set");
  if (init.empty()) throw std::invalid_argument("no blobs");

  const Heatmap base = render(init, width, height);
  const BoxSet union_target{{union_box(teacher), 1.0}};
  RngState rng(schedule.seed);

  Phase2Result out;
  out.params = init;

  // cap per-iteration parameter motion so a large gradient cannot overshoot
  constexpr double kMaxStep = 0.01;

  for (int it = 0; it <= schedule.phase2_iters; ++it) {
    const RenderResult rr = render_with_mask(out.params, width, height);
    SoftBoxResult sb;
    try {
      sb = soft_boxes_full(rr.map, calib);
    } catch (const std::runtime_error&) {
      throw std::runtime_error("refinement diverged at iteration " + std::to_string(it));
    }
    const bool use_union = rng.next_uniform() >= 0.5;
    const BoxSet& target = use_union ? union_target : teacher;

    const double det_loss = loss_h(target, {sb.pred}, 1, w).first.total;
    const double reg = reg_loss_f(rr.map, base);
    const double total = det_loss + reg_weight * reg;
    if (!std::isfinite(total)) {
      throw std::runtime_error("refinement diverged at iteration " + std::to_string(it));
    }
    out.trace.push_back(total);
    if (it == schedule.phase2_iters) break;

    // chain: loss -> predicted box -> map values -> blob parameters
    const std::vector<PredGrad> g = grad_loss_h(target, {sb.pred}, 1, w);
    const std::array<std::vector<double>, 6> jac = soft_boxes_jacobian(rr.map, calib);
    const size_t npix = rr.map.values.size();
    std::vector<double> dmap(npix, 0.0);
    for (int j = 0; j < 6; ++j) {
      for (size_t i = 0; i < npix; ++i) dmap[i] += g[0][j] * jac[j][i];
    }
    for (size_t i = 0; i < npix; ++i) {
      dmap[i] += reg_weight * 2.0 *
                 (static_cast<double>(rr.map.values[i]) - base.values[i]) / npix;
      if (rr.saturated[i]) dmap[i] = 0.0;  // clamp blocks the gradient
    }

    std::vector<std::array<double, 5>> pgrad(out.params.size(), {0, 0, 0, 0, 0});
    for (int y = 0; y < height; ++y) {
      const double yc = (y + 0.5) / height;
      for (int x = 0; x < width; ++x) {
        const double xc = (x + 0.5) / width;
        const size_t i = static_cast<size_t>(y) * width + x;
        if (dmap[i] == 0.0) continue;
        for (size_t b = 0; b < out.params.size(); ++b) {
          const GaussianBlob& blob = out.params[b];
          const double v = blob_value(blob, xc, yc);
          const double dx = xc - blob.mu_x;
          const double dy = yc - blob.mu_y;
          pgrad[b][0] += dmap[i] * v * dx / (blob.sigma_x * blob.sigma_x);
          pgrad[b][1] += dmap[i] * v * dy / (blob.sigma_y * blob.sigma_y);
          pgrad[b][2] += dmap[i] * v * dx * dx /
                         (blob.sigma_x * blob.sigma_x * blob.sigma_x);
          pgrad[b][3] += dmap[i] * v * dy * dy /
                         (blob.sigma_y * blob.sigma_y * blob.sigma_y);
          pgrad[b][4] += dmap[i] * (blob.amplitude > 0.0 ? v / blob.amplitude : 0.0);
        }
      }
    }
    for (size_t b = 0; b < out.params.size(); ++b) {
      auto step = [&](double g) {
        return std::clamp(schedule.lr_phase2 * g, -kMaxStep, kMaxStep);
      };
      out.params[b].mu_x -= step(pgrad[b][0]);
      out.params[b].mu_y -= step(pgrad[b][1]);
      out.params[b].sigma_x -= step(pgrad[b][2]);
      out.params[b].sigma_y -= step(pgrad[b][3]);
      out.params[b].amplitude -= step(pgrad[b][4]);
      out.params[b].sigma_x = std::max(out.params[b].sigma_x, 1e-3);
      out.params[b].sigma_y = std::max(out.params[b].sigma_y, 1e-3);
    }
  }
  return out;
}

}  // namespace bbr
