#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bbr/discovery.hpp"
#include "bbr/geometry.hpp"
#include "bbr/heatmap.hpp"
#include "bbr/io.hpp"
#include "bbr/matching.hpp"
#include "bbr/metrics.hpp"
#include "bbr/refinesim.hpp"
#include "bbr/rng.hpp"

namespace py = pybind11;
using namespace bbr;

namespace {

Heatmap heatmap_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("heatmap array must be 2-D");
  Heatmap m;
  m.height = static_cast<int>(arr.shape(0));
  m.width = static_cast<int>(arr.shape(1));
  m.values.assign(arr.data(), arr.data() + arr.size());
  return m;
}

py::array_t<float> heatmap_to_array(const Heatmap& m) {
  py::array_t<float> arr({m.height, m.width});
  std::copy(m.values.begin(), m.values.end(), arr.mutable_data());
  return arr;
}

FeatureGrid grid_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 3) throw std::invalid_argument("feature array must be (rows, cols, dim)");
  FeatureGrid g;
  g.rows = static_cast<int>(arr.shape(0));
  g.cols = static_cast<int>(arr.shape(1));
  g.dim = static_cast<int>(arr.shape(2));
  g.features.assign(arr.data(), arr.data() + arr.size());
  return g;
}

}  // namespace

PYBIND11_MODULE(boxrefine, m) {
  m.doc() = "heatmap-to-box extraction, matching losses, and object discovery";

  py::class_<Box>(m, "Box")
      .def(py::init<double, double, double, double>(), py::arg("cx"), py::arg("cy"),
           py::arg("w"), py::arg("h"))
      .def_readwrite("cx", &Box::cx)
      .def_readwrite("cy", &Box::cy)
      .def_readwrite("w", &Box::w)
      .def_readwrite("h", &Box::h)
      .def("corners",
           [](const Box& b) {
             const Corners c = to_corners(b);
             return py::make_tuple(c.x0, c.y0, c.x1, c.y1);
           })
      .def("__repr__", [](const Box& b) {
        return "Box(cx=" + std::to_string(b.cx) + ", cy=" + std::to_string(b.cy) +
               ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) + ")";
      });

  py::class_<ScoredBox>(m, "ScoredBox")
      .def(py::init([](const Box& b, double score) { return ScoredBox{b, score}; }),
           py::arg("box"), py::arg("score"))
      .def_readwrite("box", &ScoredBox::box)
      .def_readwrite("score", &ScoredBox::score);

  py::class_<PredBox>(m, "PredBox")
      .def(py::init([](const Box& b, double lo, double ln) {
             return PredBox{b, lo, ln};
           }),
           py::arg("box"), py::arg("logit_obj") = 0.0, py::arg("logit_noobj") = 0.0)
      .def_readwrite("box", &PredBox::box)
      .def_readwrite("logit_obj", &PredBox::logit_obj)
      .def_readwrite("logit_noobj", &PredBox::logit_noobj)
      .def("objectness", &PredBox::objectness);

  m.def("from_corners", &from_corners, py::arg("x0"), py::arg("y0"), py::arg("x1"),
        py::arg("y1"));
  m.def("iou", &iou);
  m.def("giou", &giou);
  m.def("union_box", &union_box);

  m.def("extract_boxes",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
          return extract_boxes(heatmap_from_array(arr));
        });
  m.def("enclosing_prediction_box",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
          return enclosing_prediction_box(heatmap_from_array(arr));
        });
  m.def(
      "nms",
      [](const std::vector<ScoredBox>& boxes, double iou_thresh, double score_ratio) {
        return nms(boxes, iou_thresh, score_ratio);
      },
      py::arg("boxes"), py::arg("iou_thresh") = 0.05, py::arg("score_ratio") = 0.5);
  m.def("move_box",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
          return move_box(heatmap_from_array(arr));
        });

  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init<>())
      .def_readwrite("lambda_cls", &LossWeights::lambda_cls)
      .def_readwrite("lambda_box", &LossWeights::lambda_box)
      .def_readwrite("lambda_giou", &LossWeights::lambda_giou);

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("cls", &LossBreakdown::cls)
      .def_readonly("box", &LossBreakdown::box)
      .def_readonly("giou", &LossBreakdown::giou)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<MatchResult>(m, "MatchResult")
      .def_readonly("target_of", &MatchResult::target_of)
      .def_readonly("total_cost", &MatchResult::total_cost);

  m.def(
      "loss_h",
      [](const BoxSet& targets, const std::vector<PredBox>& preds, int k,
         const LossWeights& w) { return loss_h(targets, preds, k, w); },
      py::arg("targets"), py::arg("preds"), py::arg("k"),
      py::arg("weights") = LossWeights{});
  m.def(
      "loss_h_bu",
      [](const BoxSet& targets, const std::vector<PredBox>& preds, int k,
         const LossWeights& w, uint64_t seed) {
        RngState rng(seed);
        return loss_h_bu(targets, preds, k, w, rng);
      },
      py::arg("targets"), py::arg("preds"), py::arg("k"),
      py::arg("weights") = LossWeights{}, py::arg("seed") = 0);
  m.def(
      "grad_loss_h",
      [](const BoxSet& targets, const std::vector<PredBox>& preds, int k,
         const LossWeights& w) { return grad_loss_h(targets, preds, k, w); },
      py::arg("targets"), py::arg("preds"), py::arg("k"),
      py::arg("weights") = LossWeights{});
  m.def(
      "finite_diff_check",
      [](const BoxSet& targets, const std::vector<PredBox>& preds, int k,
         const LossWeights& w, double step) {
        return finite_diff_check(targets, preds, k, w, step);
      },
      py::arg("targets"), py::arg("preds"), py::arg("k"),
      py::arg("weights") = LossWeights{}, py::arg("step") = 1e-5);
  m.def("hungarian", [](const std::vector<std::vector<double>>& cost) {
    return hungarian(cost);
  });

  py::class_<DiscoveryResult>(m, "DiscoveryResult")
      .def_readonly("selected", &DiscoveryResult::selected)
      .def_readonly("seed", &DiscoveryResult::seed)
      .def_readonly("box", &DiscoveryResult::box)
      .def_readonly("eigenvector", &DiscoveryResult::eigenvector);

  m.def(
      "lost_discover",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> arr, int a) {
        return lost_discover(grid_from_array(arr), a);
      },
      py::arg("features"), py::arg("a") = 100);
  m.def(
      "tokencut_discover",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> arr, double tau,
         double eps) { return tokencut_discover(grid_from_array(arr), tau, eps); },
      py::arg("features"), py::arg("tau") = 0.2, py::arg("eps") = 1e-5);

  m.def("pointing_hit",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> arr,
           const BoxSet& gt) { return pointing_hit(heatmap_from_array(arr), gt); });
  m.def("bbox_hit", &bbox_hit);
  m.def("corloc_hit", &corloc_hit);

  py::class_<GaussianBlob>(m, "GaussianBlob")
      .def(py::init([](double mx, double my, double sx, double sy, double amp) {
             return GaussianBlob{mx, my, sx, sy, amp};
           }),
           py::arg("mu_x"), py::arg("mu_y"), py::arg("sigma_x"), py::arg("sigma_y"),
           py::arg("amplitude"))
      .def_readwrite("mu_x", &GaussianBlob::mu_x)
      .def_readwrite("mu_y", &GaussianBlob::mu_y)
      .def_readwrite("sigma_x", &GaussianBlob::sigma_x)
      .def_readwrite("sigma_y", &GaussianBlob::sigma_y)
      .def_readwrite("amplitude", &GaussianBlob::amplitude);

  py::class_<Calibration>(m, "Calibration")
      .def(py::init<>())
      .def_readwrite("scale", &Calibration::scale)
      .def_readwrite("offset", &Calibration::offset);

  py::class_<Schedule>(m, "Schedule")
      .def(py::init<>())
      .def_readwrite("phase1_iters", &Schedule::phase1_iters)
      .def_readwrite("phase2_iters", &Schedule::phase2_iters)
      .def_readwrite("lr_phase1", &Schedule::lr_phase1)
      .def_readwrite("lr_phase2", &Schedule::lr_phase2)
      .def_readwrite("seed", &Schedule::seed);

  py::class_<Phase2Result>(m, "Phase2Result")
      .def_readonly("params", &Phase2Result::params)
      .def_readonly("trace", &Phase2Result::trace);

  m.def("render", [](const BlobParams& params, int width, int height) {
    return heatmap_to_array(render(params, width, height));
  });
  m.def(
      "soft_boxes",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> arr,
         const Calibration& calib) { return soft_boxes(heatmap_from_array(arr), calib); },
      py::arg("heatmap"), py::arg("calibration") = Calibration{});
  m.def(
      "phase2_refine",
      [](const BlobParams& init, const BoxSet& teacher, const Calibration& calib,
         const Schedule& schedule, double reg_weight, int width, int height) {
        return phase2_refine(init, teacher, calib, schedule, reg_weight, width, height);
      },
      py::arg("init"), py::arg("teacher"), py::arg("calibration"), py::arg("schedule"),
      py::arg("reg_weight"), py::arg("width"), py::arg("height"));

  m.def("read_tensor", [](const std::string& path) -> py::object {
    Tensor t = read_tensor(path);
    if (std::holds_alternative<Heatmap>(t)) {
      return heatmap_to_array(std::get<Heatmap>(t));
    }
    const FeatureGrid& g = std::get<FeatureGrid>(t);
    py::array_t<double> arr({g.rows, g.cols, g.dim});
    std::copy(g.features.begin(), g.features.end(), arr.mutable_data());
    return arr;
  });
  m.def("write_heatmap",
        [](const std::string& path,
           py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
          write_tensor(path, heatmap_from_array(arr));
        });
  m.def("write_features",
        [](const std::string& path,
           py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
          write_tensor(path, grid_from_array(arr));
        });
}
