#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "topogdn/model.hpp"
#include "topogdn/tensor.hpp"
#include "topogdn/topology.hpp"

using namespace topogdn;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({r, c}, std::move(v));
}

UndirectedGraph random_graph(std::size_t n, std::size_t degree, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t k = 0; k < degree; ++k) {
      std::size_t v = rng.below(n);
      if (v != u) edges.emplace_back(std::min(u, v), std::max(u, v));
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return UndirectedGraph::from_edges(n, std::move(edges));
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor(n, n, rng), b = random_tensor(n, n, rng);
  NoTapeScope quiet;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

static void BM_Persistence(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto graph = random_graph(n, 15, rng);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.uniform();
  auto view = quantile_view(values, 8);
  for (auto _ : state) benchmark::DoNotOptimize(compute_persistence(view, graph));
}
BENCHMARK(BM_Persistence)->Arg(16)->Arg(512)->Arg(4096);

static void BM_ModelForward(benchmark::State& state) {
  ModelConfig c;
  c.nodes = 16;
  c.window = 50;
  c.embed_dim = 128;
  c.top_k = 15;
  c.ta_enabled = state.range(0) != 0;
  TopoGDNModel model(c);
  Rng rng(3);
  Tensor x = random_tensor(32 * 16, 50, rng);
  NoTapeScope quiet;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
  state.SetLabel(c.ta_enabled ? "with topology" : "without topology");
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  ModelConfig c;
  c.nodes = 16;
  c.window = 50;
  c.embed_dim = 128;
  c.top_k = 15;
  TopoGDNModel model(c);
  Rng rng(4);
  Tensor x = random_tensor(32 * 16, 50, rng), y = random_tensor(32, 16, rng);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = mse_loss(model.forward(x), y);
    tape.backward(loss);
    for (auto& p : model.parameters()) p.tensor->zero_grad();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
