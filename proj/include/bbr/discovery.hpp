#pragma once

#include <vector>

#include "bbr/geometry.hpp"
#include "bbr/heatmap.hpp"

namespace bbr {

// Per-patch feature vectors on a rows x cols grid, row-major patch order.
struct FeatureGrid {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> features;  // (rows*cols) x dim

  int patch_count() const { return rows * cols; }
  const double* patch(int p) const { return features.data() + static_cast<size_t>(p) * dim; }
};

enum class GraphFlavor { LostBinary, TokenCutAffinity };

struct PatchGraph {
  int n = 0;
  GraphFlavor flavor = GraphFlavor::LostBinary;
  std::vector<double> adjacency;  // n x n, symmetric

  double at(int p, int q) const { return adjacency[static_cast<size_t>(p) * n + q]; }
};

struct DiscoveryResult {
  std::vector<int> selected;  // patch indices
  int seed = -1;              // LOST only
  Box box;
  std::vector<double> eigenvector;  // TokenCut only
};

// a_pq = 1 iff <f_p, f_q> >= 0
PatchGraph lost_adjacency(const FeatureGrid& grid);

// lowest-degree patch, ties by lowest index
int lost_seed(const PatchGraph& graph);

// Low-degree candidate filter, correlation expansion, then the 4-connected
// grid component containing the seed.
std::vector<int> lost_expand(const FeatureGrid& grid, const PatchGraph& graph, int a);

DiscoveryResult lost_discover(const FeatureGrid& grid, int a = 100);

// A_pq = 1 if cosine similarity >= tau, else eps
PatchGraph tokencut_affinity(const FeatureGrid& grid, double tau = 0.2, double eps = 1e-5);

struct FiedlerResult {
  std::vector<double> vector;  // D-weighted norm 1, largest-|entry| positive
  double eigenvalue = 0.0;
  bool degenerate = false;  // eigen-gap below threshold
};

// Second-smallest generalized eigenvector of (D - W) x = lambda D x.
FiedlerResult fiedler_vector(const PatchGraph& graph);

DiscoveryResult tokencut_discover(const FeatureGrid& grid, double tau = 0.2,
                                  double eps = 1e-5);

// Binarize at absolute 0.5 and box the largest 8-connected component.
Box move_box(const Heatmap& m);

// Tight normalized bounding box of a set of patch cells.
Box patch_set_box(const std::vector<int>& patches, int rows, int cols);

}  // namespace bbr
