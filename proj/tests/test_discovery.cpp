#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bbr/discovery.hpp"
#include "bbr/rng.hpp"
#include "oracles.hpp"

using namespace bbr;

namespace {

// 2x3 grid: patches 0,1 are "object" features near (1,0); patches 2..5
// are "background" near (-1, 0.05).
FeatureGrid six_patch_fixture() {
  FeatureGrid g;
  g.rows = 2;
  g.cols = 3;
  g.dim = 2;
  g.features = {
      1.0,  0.0,   // patch 0 (row 0, col 0)
      1.0,  0.0,   // patch 1 (row 0, col 1)
      -1.0, 0.05,  // patch 2 (row 0, col 2)
      -1.0, 0.05,  // patch 3
      -1.0, 0.05,  // patch 4
      -1.0, 0.05,  // patch 5
  };
  return g;
}

FeatureGrid grid_from(int rows, int cols, const std::vector<std::vector<double>>& feats) {
  FeatureGrid g;
  g.rows = rows;
  g.cols = cols;
  g.dim = static_cast<int>(feats[0].size());
  for (const auto& f : feats) g.features.insert(g.features.end(), f.begin(), f.end());
  return g;
}

double grid_dot(const FeatureGrid& g, int p, int q) {
  double s = 0.0;
  for (int i = 0; i < g.dim; ++i) s += g.patch(p)[i] * g.patch(q)[i];
  return s;
}

}  // namespace

TEST_CASE("lost adjacency") {
  SUBCASE("orthogonal dot product counts as connected") {
    const FeatureGrid g = grid_from(1, 2, {{1, 0}, {0, 1}});
    const PatchGraph a = lost_adjacency(g);
    CHECK(a.at(0, 1) == 1.0);
    CHECK(a.at(0, 0) == 1.0);
  }
  SUBCASE("anti-parallel features disconnected") {
    const FeatureGrid g = grid_from(1, 2, {{1, 0}, {-1, 0}});
    CHECK(lost_adjacency(g).at(0, 1) == 0.0);
  }
  SUBCASE("six patch fixture degrees via brute force") {
    const FeatureGrid g = six_patch_fixture();
    const PatchGraph a = lost_adjacency(g);
    // oracle: evaluate the sign rule directly
    for (int p = 0; p < 6; ++p) {
      for (int q = 0; q < 6; ++q) {
        CHECK(a.at(p, q) == ((grid_dot(g, p, q) >= 0.0) ? 1.0 : 0.0));
      }
    }
    for (int p = 0; p < 6; ++p) {
      double deg = 0;
      for (int q = 0; q < 6; ++q) deg += a.at(p, q);
      CHECK(deg == (p < 2 ? 2.0 : 4.0));
    }
  }
  SUBCASE("adjacency is bitwise symmetric") {
    RngState rng(4);
    FeatureGrid g;
    g.rows = 3;
    g.cols = 4;
    g.dim = 5;
    for (int i = 0; i < 60; ++i) g.features.push_back(rng.next_uniform(-1.0, 1.0));
    const PatchGraph a = lost_adjacency(g);
    for (int p = 0; p < a.n; ++p) {
      for (int q = 0; q < a.n; ++q) CHECK(a.at(p, q) == a.at(q, p));
    }
  }
}

TEST_CASE("lost seed") {
  SUBCASE("six patch fixture seeds at patch 0") {
    CHECK(lost_seed(lost_adjacency(six_patch_fixture())) == 0);
  }
  SUBCASE("tie breaks to the lowest index") {
    const FeatureGrid g = grid_from(1, 3, {{1, 0}, {1, 0}, {1, 0}});
    CHECK(lost_seed(lost_adjacency(g)) == 0);
  }
  SUBCASE("star graph picks the lowest-index leaf") {
    PatchGraph star;
    star.n = 4;
    star.flavor = GraphFlavor::LostBinary;
    star.adjacency.assign(16, 0.0);
    for (int i = 0; i < 4; ++i) star.adjacency[i * 4 + i] = 1.0;
    for (int i = 1; i < 4; ++i) {
      star.adjacency[0 * 4 + i] = 1.0;
      star.adjacency[i * 4 + 0] = 1.0;
    }
    CHECK(lost_seed(star) == 1);
  }
}

TEST_CASE("lost expand") {
  SUBCASE("six patch fixture, a=3") {
    const FeatureGrid g = six_patch_fixture();
    const PatchGraph a = lost_adjacency(g);
    const std::vector<int> comp = lost_expand(g, a, 3);
    CHECK(comp == std::vector<int>{0, 1});
  }
  SUBCASE("single patch grid") {
    const FeatureGrid g = grid_from(1, 1, {{1.0, 2.0}});
    CHECK(lost_expand(g, lost_adjacency(g), 1) == std::vector<int>{0});
  }
  SUBCASE("patches disconnected from the seed are excluded") {
    // object patches at opposite grid corners: both pass the sign tests
    // but only the seed's 4-connected component is returned
    FeatureGrid g = grid_from(2, 3, {{1, 0}, {-1, 0.05}, {1, 0},
                                     {-1, 0.05}, {-1, 0.05}, {-1, 0.05}});
    const std::vector<int> comp = lost_expand(g, lost_adjacency(g), 2);
    CHECK(std::find(comp.begin(), comp.end(), 2) == comp.end());
    CHECK(std::find(comp.begin(), comp.end(), 0) != comp.end());
  }
}

TEST_CASE("lost discover") {
  SUBCASE("fixture box covers row 0, cols 0-1") {
    const DiscoveryResult res = lost_discover(six_patch_fixture(), 3);
    CHECK(res.seed == 0);
    CHECK(res.selected == std::vector<int>{0, 1});
    const Corners c = to_corners(res.box);
    CHECK(c.x0 == doctest::Approx(0.0));
    CHECK(c.y0 == doctest::Approx(0.0));
    CHECK(c.x1 == doctest::Approx(2.0 / 3.0));
    CHECK(c.y1 == doctest::Approx(0.5));
  }
  SUBCASE("uniform features select the whole grid") {
    const FeatureGrid g = grid_from(2, 2, {{1, 1}, {1, 1}, {1, 1}, {1, 1}});
    const DiscoveryResult res = lost_discover(g);
    CHECK(res.selected.size() == 4);
    const Corners c = to_corners(res.box);
    CHECK(c.x1 == doctest::Approx(1.0));
    CHECK(c.y1 == doctest::Approx(1.0));
  }
  SUBCASE("a larger than N is clipped") {
    const DiscoveryResult res = lost_discover(six_patch_fixture(), 100);
    CHECK(res.seed == 0);
    CHECK_FALSE(res.selected.empty());
  }
  SUBCASE("component always contains the seed and is 4-connected") {
    RngState rng(9);
    for (int t = 0; t < 30; ++t) {
      FeatureGrid g;
      g.rows = 4;
      g.cols = 4;
      g.dim = 3;
      for (int i = 0; i < 48; ++i) g.features.push_back(rng.next_uniform(-1.0, 1.0));
      const DiscoveryResult res = lost_discover(g, 8);
      CHECK(std::find(res.selected.begin(), res.selected.end(), res.seed) !=
            res.selected.end());
      // BFS over grid adjacency restricted to the selection
      std::vector<char> in(16, 0), vis(16, 0);
      for (int p : res.selected) in[p] = 1;
      std::vector<int> stack = {res.seed};
      vis[res.seed] = 1;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int r = p / 4, c = p % 4;
        const int cand[4] = {p - 4, p + 4, (c > 0) ? p - 1 : -1, (c < 3) ? p + 1 : -1};
        for (int q : cand) {
          if (q >= 0 && q < 16 && in[q] && !vis[q]) {
            vis[q] = 1;
            stack.push_back(q);
          }
        }
      }
      for (int p : res.selected) CHECK(vis[p] == 1);
    }
  }
  SUBCASE("invariant to a global positive feature scale") {
    FeatureGrid g = six_patch_fixture();
    const DiscoveryResult base = lost_discover(g, 3);
    for (double& v : g.features) v *= 7.5;
    const DiscoveryResult scaled = lost_discover(g, 3);
    CHECK(base.selected == scaled.selected);
    CHECK(base.seed == scaled.seed);
  }
}

TEST_CASE("tokencut affinity") {
  SUBCASE("parallel and orthogonal entries") {
    const FeatureGrid g = grid_from(1, 2, {{2, 0}, {5, 0}});
    CHECK(tokencut_affinity(g).at(0, 1) == 1.0);
    const FeatureGrid o = grid_from(1, 2, {{1, 0}, {0, 1}});
    CHECK(tokencut_affinity(o).at(0, 1) == 1e-5);
    CHECK(tokencut_affinity(o).at(0, 0) == 1.0);
  }
  SUBCASE("two-block form") {
    const FeatureGrid g = grid_from(2, 2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}});
    const PatchGraph a = tokencut_affinity(g);
    for (int p = 0; p < 4; ++p) {
      for (int q = 0; q < 4; ++q) {
        const bool same = (p < 2) == (q < 2);
        CHECK(a.at(p, q) == (same ? 1.0 : 1e-5));
      }
    }
  }
  SUBCASE("zero feature vector errors") {
    const FeatureGrid g = grid_from(1, 2, {{1, 0}, {0, 0}});
    CHECK_THROWS_AS(tokencut_affinity(g), std::runtime_error);
  }
}

namespace {

// residual of the generalized problem: ||(D - W) x - lambda D x||
double generalized_residual(const PatchGraph& graph, const std::vector<double>& x,
                            double lambda) {
  const int n = graph.n;
  double num = 0.0, den = 0.0;
  for (int p = 0; p < n; ++p) {
    double d = 0.0;
    for (int q = 0; q < n; ++q) d += graph.at(p, q);
    double lx = d * x[p];
    for (int q = 0; q < n; ++q) lx -= graph.at(p, q) * x[q];
    const double r = lx - lambda * d * x[p];
    num += r * r;
    den += (d * x[p]) * (d * x[p]);
  }
  return std::sqrt(num) / std::sqrt(den);
}

// oracle eigensolver on the symmetric normalized form
std::vector<double> oracle_fiedler(const PatchGraph& graph) {
  const int n = graph.n;
  std::vector<double> d(n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) d[p] += graph.at(p, q);
  }
  std::vector<double> lsym(static_cast<size_t>(n) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      const double w = graph.at(p, q) / std::sqrt(d[p] * d[q]);
      lsym[static_cast<size_t>(p) * n + q] = (p == q ? 1.0 : 0.0) - w;
    }
  }
  const oracle::EigenResult eig = oracle::jacobi_eigen(lsym, n);
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = eig.vectors[1][i] / std::sqrt(d[i]);
  return x;
}

}  // namespace

TEST_CASE("fiedler vector") {
  SUBCASE("two-block fixture splits by sign") {
    const FeatureGrid g = grid_from(2, 2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}});
    const PatchGraph a = tokencut_affinity(g);
    const FiedlerResult f = fiedler_vector(a);
    CHECK(f.vector[0] * f.vector[1] > 0.0);
    CHECK(f.vector[2] * f.vector[3] > 0.0);
    CHECK(f.vector[0] * f.vector[2] < 0.0);

    // sign pattern agrees with the Jacobi oracle
    const std::vector<double> ox = oracle_fiedler(a);
    double flip = (ox[0] * f.vector[0] < 0.0) ? -1.0 : 1.0;
    for (int i = 0; i < 4; ++i) {
      CHECK(f.vector[i] * (flip * ox[i]) > 0.0);
    }
  }
  SUBCASE("residual and D-orthogonality on a connected graph") {
    RngState rng(55);
    FeatureGrid g;
    g.rows = 4;
    g.cols = 4;
    g.dim = 6;
    for (int i = 0; i < 96; ++i) g.features.push_back(rng.next_uniform(-1.0, 1.0));
    const PatchGraph a = tokencut_affinity(g);
    const FiedlerResult f = fiedler_vector(a);
    CHECK(f.eigenvalue > 0.0);
    CHECK(generalized_residual(a, f.vector, f.eigenvalue) <= 1e-8);
    double dot1 = 0.0;
    for (int p = 0; p < a.n; ++p) {
      double d = 0.0;
      for (int q = 0; q < a.n; ++q) d += a.at(p, q);
      dot1 += d * f.vector[p];
    }
    CHECK(std::abs(dot1) < 1e-8);
  }
  SUBCASE("two-node closed form") {
    const FeatureGrid g = grid_from(1, 2, {{1, 0}, {0, 1}});
    const PatchGraph a = tokencut_affinity(g);
    const FiedlerResult f = fiedler_vector(a);
    // analytic: for a 2-node graph the cut eigenvector is (1, -1)/sqrt(d)
    CHECK(f.vector[0] * f.vector[1] < 0.0);
    CHECK(std::abs(f.vector[0]) == doctest::Approx(std::abs(f.vector[1])).epsilon(1e-9));
    const double lambda_expected = 2.0 * a.at(0, 1) / (1.0 + a.at(0, 1));
    CHECK(f.eigenvalue == doctest::Approx(lambda_expected).epsilon(1e-9));
  }
}

TEST_CASE("tokencut discover") {
  SUBCASE("two-block 2x2 grid selects the top half") {
    const FeatureGrid g = grid_from(2, 2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}});
    const DiscoveryResult res = tokencut_discover(g);
    CHECK(res.selected == std::vector<int>{0, 1});
    const Corners c = to_corners(res.box);
    CHECK(c.x0 == doctest::Approx(0.0));
    CHECK(c.y0 == doctest::Approx(0.0));
    CHECK(c.x1 == doctest::Approx(1.0));
    CHECK(c.y1 == doctest::Approx(0.5));
  }
  SUBCASE("identical features fall back to the full frame") {
    const FeatureGrid g = grid_from(2, 2, {{1, 1}, {1, 1}, {1, 1}, {1, 1}});
    const DiscoveryResult res = tokencut_discover(g);
    CHECK(res.selected.size() == 4);
    const Corners c = to_corners(res.box);
    CHECK(c.x1 == doctest::Approx(1.0));
    CHECK(c.y1 == doctest::Approx(1.0));
  }
  SUBCASE("planted 3-vs-13 minority block recovered on a 4x4 grid") {
    std::vector<std::vector<double>> feats(16, {0.0, 1.0});
    feats[0] = {1.0, 0.0};
    feats[1] = {1.0, 0.0};
    feats[4] = {1.0, 0.0};  // minority: patches 0, 1, 4 (an L in the corner)
    const FeatureGrid g = grid_from(4, 4, feats);
    const DiscoveryResult res = tokencut_discover(g);
    CHECK(res.selected == std::vector<int>{0, 1, 4});
  }
  SUBCASE("invariant to positive feature rescaling") {
    std::vector<std::vector<double>> feats(16, {0.2, 0.9});
    feats[5] = {0.9, -0.1};
    feats[6] = {0.9, -0.1};
    FeatureGrid g = grid_from(4, 4, feats);
    const DiscoveryResult base = tokencut_discover(g);
    for (double& v : g.features) v *= 3.25;
    const DiscoveryResult scaled = tokencut_discover(g);
    CHECK(base.selected == scaled.selected);
  }
}

TEST_CASE("move box") {
  SUBCASE("largest component wins") {
    Heatmap m = make_heatmap(10, 10);
    for (int y = 1; y < 5; ++y) {
      for (int x = 1; x < 4; ++x) m.at(x, y) = 0.9f;  // area 12
    }
    for (int y = 6; y < 7; ++y) {
      for (int x = 5; x < 10; ++x) m.at(x, y) = 1.0f;  // area 5
    }
    const Box b = move_box(m);
    const Corners c = to_corners(b);
    CHECK(c.x0 == doctest::Approx(0.1));
    CHECK(c.y0 == doctest::Approx(0.1));
    CHECK(c.x1 == doctest::Approx(0.4));
    CHECK(c.y1 == doctest::Approx(0.5));
  }
  SUBCASE("single blob") {
    Heatmap m = make_heatmap(8, 8);
    m.at(3, 3) = 0.6f;
    m.at(4, 3) = 0.6f;
    const Box b = move_box(m);
    const Corners c = to_corners(b);
    CHECK(c.x0 == doctest::Approx(3.0 / 8));
    CHECK(c.x1 == doctest::Approx(5.0 / 8));
  }
  SUBCASE("threshold is absolute, not half-max") {
    const Heatmap m = make_heatmap(4, 4, 0.4f);
    CHECK_THROWS_AS(move_box(m), std::runtime_error);
  }
}
