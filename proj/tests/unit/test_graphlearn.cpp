#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topogdn/errors.hpp"
#include "topogdn/graphlearn.hpp"

using namespace topogdn;

namespace {

std::vector<double> random_embeddings(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Brute-force Top-K: sort peers by (similarity desc, index asc).
std::vector<std::vector<std::size_t>> brute_top_k(const std::vector<double>& e, std::size_t n,
                                                  std::size_t d, std::size_t k) {
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> peers;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t c = 0; c < d; ++c) {
        dot += e[i * d + c] * e[j * d + c];
        ni += e[i * d + c] * e[i * d + c];
        nj += e[j * d + c] * e[j * d + c];
      }
      peers.push_back({-dot / ((std::sqrt(ni) + 1e-12) * (std::sqrt(nj) + 1e-12)), j});
    }
    std::sort(peers.begin(), peers.end());
    for (std::size_t r = 0; r < std::min(k, n - 1); ++r) out[i].push_back(peers[r].second);
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

}  // namespace

TEST(Similarity, IdenticalIsOne) {
  std::vector<double> a{0.3, -2, 5};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
}

TEST(Similarity, OrthogonalIsZero) {
  std::vector<double> a{1, 0}, b{0, 3};
  EXPECT_EQ(cosine_similarity(a, b), 0.0);
}

TEST(Similarity, FortyFiveDegrees) {
  std::vector<double> a{1, 0}, b{1, 1};
  EXPECT_NEAR(cosine_similarity(a, b), std::sqrt(2.0) / 2, 1e-11);
}

TEST(Similarity, ZeroVectorIsGuarded) {
  std::vector<double> a{0, 0}, b{1, 1};
  EXPECT_EQ(cosine_similarity(a, b), 0.0);
}

TEST(Adjacency, FullKIsCompleteDigraph) {
  Rng rng(1);
  auto e = random_embeddings(6, 4, rng);
  auto a = build_adjacency(e, 6, 4, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.neighbors[i].size(), 5u);
    EXPECT_FALSE(a.has_edge(i, i));
  }
}

TEST(Adjacency, HandEnumeratedThreeNodes) {
  std::vector<double> sim{1, 0.9, 0.1, 0.9, 1, 0.2, 0.1, 0.2, 1};
  auto a = top_k_adjacency(sim, 3, 1);
  EXPECT_EQ(a.neighbors, (std::vector<std::vector<std::size_t>>{{1}, {0}, {1}}));
}

TEST(Adjacency, TiesGoToLowerIndex) {
  std::vector<double> sim{1, 0.5, 0.5, 0.5, 0.5, 1, 0.1, 0.1, 0.5, 0.1, 1, 0.1,
                          0.5, 0.1, 0.1, 1};
  auto a = top_k_adjacency(sim, 4, 1);
  EXPECT_EQ(a.neighbors[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(a.neighbors[2], (std::vector<std::size_t>{0}));
}

TEST(Adjacency, OversizedKIsClamped) {
  Rng rng(2);
  auto e = random_embeddings(4, 3, rng);
  auto a = build_adjacency(e, 4, 3, 9);
  for (const auto& row : a.neighbors) EXPECT_EQ(row.size(), 3u);
  EXPECT_THROW(build_adjacency(e, 4, 3, 0), ConfigError);
}

TEST(Adjacency, OutDegreeAndBruteForceAgreement) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::size_t n = 2 + rng.below(15), d = 1 + rng.below(8), k = 1 + rng.below(20);
    auto e = random_embeddings(n, d, rng);
    auto a = build_adjacency(e, n, d, k);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(a.neighbors[i].size(), std::min(k, n - 1));
      EXPECT_FALSE(a.has_edge(i, i));
    }
    EXPECT_EQ(a.neighbors, brute_top_k(e, n, d, k)) << "seed " << seed;
  }
}

TEST(Adjacency, InvariantUnderPositiveRescale) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::size_t n = 3 + rng.below(12), d = 2 + rng.below(6), k = 1 + rng.below(5);
    auto e = random_embeddings(n, d, rng);
    double lambda = std::exp(rng.uniform(-5, 5));
    auto scaled = e;
    for (auto& x : scaled) x *= lambda;
    EXPECT_EQ(build_adjacency(e, n, d, k), build_adjacency(scaled, n, d, k)) << "seed " << seed;
  }
}

TEST(Adjacency, DenseRoundTrip) {
  Rng rng(3);
  auto e = random_embeddings(7, 3, rng);
  auto a = build_adjacency(e, 7, 3, 2);
  auto m = a.dense();
  auto back = Adjacency::from_dense(m, 7);
  EXPECT_EQ(back.neighbors, a.neighbors);
  for (std::size_t i = 0; i < 7; ++i)
    EXPECT_EQ(std::accumulate(m.begin() + i * 7, m.begin() + (i + 1) * 7, 0.0), 2.0);
}

TEST(SensorGraph, RebuildIsDeterministicAndFreezeLocks) {
  Rng a(9), b(9);
  SensorGraph g1(8, 5, 3, a), g2(8, 5, 3, b);
  g1.rebuild();
  g2.rebuild();
  EXPECT_EQ(g1.adjacency(), g2.adjacency());
  g1.freeze();
  auto before = g1.adjacency();
  for (auto& v : g1.embeddings().data()) v = -v * v;
  g1.rebuild();
  EXPECT_EQ(g1.adjacency(), before);
  EXPECT_TRUE(g1.frozen());
}

TEST(SensorGraph, DotHasOneLinePerEdge) {
  Rng rng(4);
  SensorGraph g(6, 4, 5, rng);
  g.rebuild();
  std::vector<std::string> names{"a", "b", "c", "d", "e", "f"};
  auto dot = adjacency_to_dot(g.adjacency(), names);
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
  std::size_t arrows = 0;
  for (std::size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 2)) ++arrows;
  EXPECT_EQ(arrows, 30u);
}
