#include "bbr/discovery.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace bbr {

namespace {

double dot(const FeatureGrid& g, int p, int q) {
  const double* fp = g.patch(p);
  const double* fq = g.patch(q);
  double s = 0.0;
  for (int i = 0; i < g.dim; ++i) s += fp[i] * fq[i];
  return s;
}

constexpr double kEigenGapThreshold = 1e-10;

}  // namespace

PatchGraph lost_adjacency(const FeatureGrid& grid) {
  const int n = grid.patch_count();
  PatchGraph g;
  g.n = n;
  g.flavor = GraphFlavor::LostBinary;
  g.adjacency.assign(static_cast<size_t>(n) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int q = p; q < n; ++q) {
      const double v = (dot(grid, p, q) >= 0.0) ? 1.0 : 0.0;
      g.adjacency[static_cast<size_t>(p) * n + q] = v;
      g.adjacency[static_cast<size_t>(q) * n + p] = v;
    }
  }
  return g;
}

int lost_seed(const PatchGraph& graph) {
  int best = 0;
  double best_deg = std::numeric_limits<double>::infinity();
  for (int p = 0; p < graph.n; ++p) {
    double deg = 0.0;
    for (int q = 0; q < graph.n; ++q) deg += graph.at(p, q);
    if (deg < best_deg) {
      best_deg = deg;
      best = p;
    }
  }
  return best;
}

std::vector<int> lost_expand(const FeatureGrid& grid, const PatchGraph& graph, int a) {
  const int n = grid.patch_count();
  if (a < 1) throw std::invalid_argument("a must be >= 1");
  a = std::min(a, n);

  std::vector<double> degree(n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) degree[p] += graph.at(p, q);
  }
  const int seed = lost_seed(graph);

  std::vector<int> by_degree(n);
  std::iota(by_degree.begin(), by_degree.end(), 0);
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&](int p, int q) { return degree[p] < degree[q]; });
  by_degree.resize(a);

  std::vector<int> correlated;  // S
  for (int q : by_degree) {
    if (dot(grid, q, seed) >= 0.0) correlated.push_back(q);
  }

  std::vector<char> expanded(n, 0);  // S+
  for (int q = 0; q < n; ++q) {
    double s = 0.0;
    for (int p : correlated) s += dot(grid, q, p);
    expanded[q] = (s >= 0.0) ? 1 : 0;
  }

  // 4-connected component of S+ (in grid space) containing the seed
  std::vector<char> in_component(n, 0);
  std::deque<int> queue;
  in_component[seed] = 1;
  queue.push_back(seed);
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    const int r = p / grid.cols;
    const int c = p % grid.cols;
    const int nr[4] = {r - 1, r + 1, r, r};
    const int nc[4] = {c, c, c - 1, c + 1};
    for (int d = 0; d < 4; ++d) {
      if (nr[d] < 0 || nr[d] >= grid.rows || nc[d] < 0 || nc[d] >= grid.cols) continue;
      const int q = nr[d] * grid.cols + nc[d];
      if (expanded[q] && !in_component[q]) {
        in_component[q] = 1;
        queue.push_back(q);
      }
    }
  }
  std::vector<int> out;
  for (int p = 0; p < n; ++p) {
    if (in_component[p]) out.push_back(p);
  }
  return out;
}

Box patch_set_box(const std::vector<int>& patches, int rows, int cols) {
  if (patches.empty()) throw std::invalid_argument("empty patch set");
  int r0 = rows, r1 = -1, c0 = cols, c1 = -1;
  for (int p : patches) {
    const int r = p / cols;
    const int c = p % cols;
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
  }
  return from_corners(static_cast<double>(c0) / cols, static_cast<double>(r0) / rows,
                      static_cast<double>(c1 + 1) / cols,
                      static_cast<double>(r1 + 1) / rows);
}

DiscoveryResult lost_discover(const FeatureGrid& grid, int a) {
  const PatchGraph graph = lost_adjacency(grid);
  DiscoveryResult res;
  res.seed = lost_seed(graph);
  res.selected = lost_expand(grid, graph, std::min(a, grid.patch_count()));
  res.box = patch_set_box(res.selected, grid.rows, grid.cols);
  return res;
}

PatchGraph tokencut_affinity(const FeatureGrid& grid, double tau, double eps) {
  const int n = grid.patch_count();
  std::vector<double> norm(n);
  for (int p = 0; p < n; ++p) {
    norm[p] = std::sqrt(dot(grid, p, p));
    if (norm[p] == 0.0) throw std::runtime_error("zero feature vector");
  }
  PatchGraph g;
  g.n = n;
  g.flavor = GraphFlavor::TokenCutAffinity;
  g.adjacency.assign(static_cast<size_t>(n) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int q = p; q < n; ++q) {
      const double cos_sim = dot(grid, p, q) / (norm[p] * norm[q]);
      const double v = (cos_sim >= tau) ? 1.0 : eps;
      g.adjacency[static_cast<size_t>(p) * n + q] = v;
      g.adjacency[static_cast<size_t>(q) * n + p] = v;
    }
  }
  return g;
}

FiedlerResult fiedler_vector(const PatchGraph& graph) {
  const int n = graph.n;
  if (n < 2) {
    FiedlerResult r;
    r.vector.assign(std::max(n, 0), 1.0);
    r.degenerate = true;
    return r;
  }

  Eigen::MatrixXd w(n, n);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) w(p, q) = graph.at(p, q);
  }
  Eigen::VectorXd d = w.rowwise().sum();
  if ((d.array() <= 0.0).any()) throw std::runtime_error("non-positive degree");
  const Eigen::VectorXd d_isqrt = d.array().rsqrt();

  // symmetric form of (D - W) x = lambda D x
  Eigen::MatrixXd lsym = -(d_isqrt.asDiagonal() * w * d_isqrt.asDiagonal());
  lsym.diagonal().array() += 1.0;
  lsym = 0.5 * (lsym + lsym.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lsym);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eigensolver failed to converge");
  }

  FiedlerResult res;
  res.eigenvalue = solver.eigenvalues()(1);
  if (n >= 3) {
    res.degenerate = (solver.eigenvalues()(2) - solver.eigenvalues()(1)) < kEigenGapThreshold;
  }
  Eigen::VectorXd x = d_isqrt.asDiagonal() * solver.eigenvectors().col(1);

  // fix sign: entry of largest magnitude positive (first such on ties)
  int arg = 0;
  for (int i = 1; i < n; ++i) {
    if (std::abs(x(i)) > std::abs(x(arg))) arg = i;
  }
  if (x(arg) < 0.0) x = -x;

  res.vector.assign(x.data(), x.data() + n);
  return res;
}

DiscoveryResult tokencut_discover(const FeatureGrid& grid, double tau, double eps) {
  const PatchGraph graph = tokencut_affinity(grid, tau, eps);
  const FiedlerResult fiedler = fiedler_vector(graph);
  const int n = grid.patch_count();

  DiscoveryResult res;
  res.eigenvector = fiedler.vector;
  if (fiedler.degenerate) {
    res.selected.resize(n);
    std::iota(res.selected.begin(), res.selected.end(), 0);
    res.box = patch_set_box(res.selected, grid.rows, grid.cols);
    return res;
  }

  const double mean =
      std::accumulate(fiedler.vector.begin(), fiedler.vector.end(), 0.0) / n;
  int arg = 0;
  for (int i = 1; i < n; ++i) {
    if (std::abs(fiedler.vector[i]) > std::abs(fiedler.vector[arg])) arg = i;
  }
  const bool pick_upper = fiedler.vector[arg] >= mean;
  for (int i = 0; i < n; ++i) {
    if ((fiedler.vector[i] >= mean) == pick_upper) res.selected.push_back(i);
  }
  res.box = patch_set_box(res.selected, grid.rows, grid.cols);
  return res;
}

Box move_box(const Heatmap& m) {
  BinaryMask mask;
  mask.width = m.width;
  mask.height = m.height;
  mask.bits.resize(m.values.size());
  for (size_t i = 0; i < m.values.size(); ++i) mask.bits[i] = (m.values[i] >= 0.5f) ? 1 : 0;

  const LabelMap lm = connected_components(mask, 8);
  if (lm.count == 0) throw std::runtime_error("empty segmentation");

  std::vector<int> areas(lm.count + 1, 0);
  for (int label : lm.labels) {
    if (label > 0) ++areas[label];
  }
  int best = 1;
  for (int l = 2; l <= lm.count; ++l) {
    if (areas[l] > areas[best]) best = l;
  }

  int x0 = m.width, x1 = -1, y0 = m.height, y1 = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (lm.labels[static_cast<size_t>(y) * m.width + x] == best) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  return from_corners(static_cast<double>(x0) / m.width, static_cast<double>(y0) / m.height,
                      static_cast<double>(x1 + 1) / m.width,
                      static_cast<double>(y1 + 1) / m.height);
}

}  // namespace bbr
