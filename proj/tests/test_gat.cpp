#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "quisg/errors.hpp"
#include "quisg/gat.hpp"
#include "quisg/graph.hpp"
#include "quisg/params.hpp"
#include "quisg/tape.hpp"
#include "quisg/tensor.hpp"

using namespace quisg;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

namespace {

graph::QuisgGraph make_graph(
    const std::vector<graph::NodeType>& types,
    const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  graph::QuisgGraph g;
  const std::size_t n = types.size();
  for (std::size_t i = 0; i < n; ++i) {
    graph::Node nd;
    nd.type = types[i];
    nd.rows = {i};
    nd.label = "n" + std::to_string(i);
    g.nodes.push_back(std::move(nd));
  }
  g.adjacency.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) g.adjacency[i * n + i] = 1;
  for (auto [a, b] : edges) {
    g.adjacency[a * n + b] = 1;
    g.adjacency[b * n + a] = 1;
  }
  return g;
}

Tensor random_states(std::size_t n, std::size_t d_h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> vals(n * d_h);
  for (double& v : vals) v = dist(rng);
  return Tensor::from_values(Shape{n, d_h}, std::move(vals));
}

std::vector<int> type_ids_of(const graph::QuisgGraph& g) {
  std::vector<int> ids;
  for (const auto& nd : g.nodes) ids.push_back(static_cast<int>(nd.type));
  return ids;
}

std::vector<std::vector<double>> as_dense(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out[r][c] = t.at(r, c);
  return out;
}

}  // namespace

TEST_CASE("the head count must divide the state width") {
  gat::GatConfig ok{2, 2, 8, 0.2};
  CHECK_NOTHROW(ok.validate());
  gat::GatConfig bad{2, 3, 8, 0.2};
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  gat::GatConfig zero{0, 2, 8, 0.2};
  CHECK_THROWS_AS(zero.validate(), PreconditionError);
}

TEST_CASE("node initial states pool the referenced hidden rows") {
  Tape tape;
  Tensor h_qc = random_states(5, 4, 1);

  graph::QuisgGraph g = make_graph(
      {graph::NodeType::kQw, graph::NodeType::kDs}, {});
  g.nodes[0].pool = graph::PoolKind::kSingleRow;
  g.nodes[0].rows = {2};
  g.nodes[1].pool = graph::PoolKind::kMean;
  g.nodes[1].rows = {1, 3};

  Tensor init = gat::node_init_matrix(tape, g, h_qc);
  REQUIRE(init.shape() == Shape{2, 4});
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(init.at(0, c) == h_qc.at(2, c));
    CHECK(init.at(1, c) == doctest::Approx(0.5 * (h_qc.at(1, c) + h_qc.at(3, c)))
                               .epsilon(1e-15));
  }

  g.nodes[1].rows = {1, 9};
  CHECK_THROWS_AS(gat::node_init_matrix(tape, g, h_qc), DimensionError);
  g.nodes[1].rows.clear();
  CHECK_THROWS_AS(gat::node_init_matrix(tape, g, h_qc), PreconditionError);
}

TEST_CASE("with only self-loops each node attends to itself alone") {
  const std::size_t d_h = 8, heads = 2, dk = d_h / heads;
  nn::ParameterStore store(5);
  gat::Gat net(store, gat::GatConfig{1, heads, d_h, 0.2});

  auto g = make_graph({graph::NodeType::kQw, graph::NodeType::kQs,
                       graph::NodeType::kDw},
                      {});
  Tensor h = random_states(3, d_h, 2);

  Tape tape;
  std::vector<Tensor> att;
  Tensor out = net.forward(tape, g, h, &att);

  REQUIRE(att.size() == heads);
  for (const Tensor& alpha : att) {
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(alpha.at(i, j) == (i == j ? 1.0 : 0.0));
  }

  // each head reduces to ELU(h_slice Wv)
  for (std::size_t hd = 0; hd < heads; ++hd) {
    auto wv = store.get("gat.l0.h" + std::to_string(hd) + ".Wv");
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t c = 0; c < dk; ++c) {
        double v = 0.0;
        for (std::size_t t = 0; t < dk; ++t)
          v += h.at(m, hd * dk + t) * wv.at(t, c);
        double expect = v > 0 ? v : std::expm1(v);
        CHECK(out.at(m, hd * dk + c) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("attention matrices are row-stochastic over the neighborhood") {
  const std::size_t d_h = 8;
  auto g = make_graph({graph::NodeType::kQw, graph::NodeType::kQs,
                       graph::NodeType::kDs, graph::NodeType::kDw,
                       graph::NodeType::kDw},
                      {{0, 1}, {0, 3}, {0, 4}, {1, 2}, {3, 4}});
  Tensor h = random_states(5, d_h, 3);

  for (std::size_t heads : {1ul, 2ul, 4ul}) {
    for (std::size_t layers : {1ul, 2ul, 3ul}) {
      nn::ParameterStore store(7 + heads);
      gat::Gat net(store, gat::GatConfig{layers, heads, d_h, 0.2});
      Tape tape;
      std::vector<Tensor> att;
      net.forward(tape, g, h, &att);
      REQUIRE(att.size() == layers * heads);
      for (const Tensor& alpha : att) {
        REQUIRE(alpha.shape() == Shape{5, 5});
        for (std::size_t i = 0; i < 5; ++i) {
          double sum = 0.0;
          for (std::size_t j = 0; j < 5; ++j) {
            if (!g.adjacency[i * 5 + j]) {
              CHECK(alpha.at(i, j) == 0.0);  // exact zero off the graph
            } else {
              CHECK(alpha.at(i, j) > 0.0);
              sum += alpha.at(i, j);
            }
          }
          CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("the stack matches a dense from-scratch recomputation") {
  const std::size_t d_h = 8, heads = 2, layers = 2;
  nn::ParameterStore store(11);
  gat::Gat net(store, gat::GatConfig{layers, heads, d_h, 0.2});

  auto g = make_graph({graph::NodeType::kQw, graph::NodeType::kQs,
                       graph::NodeType::kDs, graph::NodeType::kDw},
                      {{0, 1}, {0, 3}, {1, 2}, {2, 3}});
  Tensor h = random_states(4, d_h, 4);

  Tape tape;
  Tensor out = net.forward(tape, g, h);

  auto w = oracles::load_gat_weights(store, "gat", layers, heads);
  auto expect = oracles::oracle_gat_forward(g.adjacency, type_ids_of(g),
                                            as_dense(h), w, d_h, heads, 0.2);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < d_h; ++c)
      CHECK(out.at(r, c) == doctest::Approx(expect[r][c]).epsilon(1e-9));
}

TEST_CASE("relabeling the nodes permutes the outputs in lockstep") {
  const std::size_t d_h = 8, heads = 2, n = 5;
  nn::ParameterStore store(13);
  gat::Gat net(store, gat::GatConfig{2, heads, d_h, 0.2});

  std::vector<graph::NodeType> types{graph::NodeType::kQw, graph::NodeType::kQs,
                                     graph::NodeType::kDs, graph::NodeType::kDw,
                                     graph::NodeType::kDw};
  std::vector<std::pair<std::size_t, std::size_t>> edges{
      {0, 1}, {0, 4}, {1, 2}, {2, 3}, {3, 4}};
  auto g = make_graph(types, edges);
  Tensor h = random_states(n, d_h, 5);

  std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new index of old node i
  std::vector<graph::NodeType> ptypes(n);
  for (std::size_t i = 0; i < n; ++i) ptypes[perm[i]] = types[i];
  std::vector<std::pair<std::size_t, std::size_t>> pedges;
  for (auto [a, b] : edges) pedges.push_back({perm[a], perm[b]});
  auto pg = make_graph(ptypes, pedges);
  Tensor ph = Tensor::zeros(Shape{n, d_h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d_h; ++c) ph.set(perm[i], c, h.at(i, c));

  Tape tape_a, tape_b;
  Tensor out = net.forward(tape_a, g, h);
  Tensor pout = net.forward(tape_b, pg, ph);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d_h; ++c)
      CHECK(out.at(i, c) == doctest::Approx(pout.at(perm[i], c)).epsilon(1e-10));
}

TEST_CASE("a node's type changes its attention behavior") {
  const std::size_t d_h = 8;
  nn::ParameterStore store(17);
  gat::Gat net(store, gat::GatConfig{1, 2, d_h, 0.2});

  auto g = make_graph({graph::NodeType::kDw, graph::NodeType::kDw,
                       graph::NodeType::kDs},
                      {{0, 1}, {1, 2}});
  Tensor h = random_states(3, d_h, 6);

  Tape tape_a;
  Tensor out_a = net.forward(tape_a, g, h);

  g.nodes[1].type = graph::NodeType::kQs;  // same states, new type
  Tape tape_b;
  Tensor out_b = net.forward(tape_b, g, h);

  double max_delta = 0.0;
  for (std::size_t c = 0; c < d_h; ++c)
    max_delta = std::max(max_delta, std::abs(out_a.at(1, c) - out_b.at(1, c)));
  CHECK(max_delta > 1e-8);
}

TEST_CASE("gradients through two layers pass the finite-difference check") {
  auto g = make_graph({graph::NodeType::kQw, graph::NodeType::kQs,
                       graph::NodeType::kDs, graph::NodeType::kDw},
                      {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  g.nodes[0].rows = {0};
  g.nodes[1].rows = {1};
  g.nodes[2].pool = graph::PoolKind::kMean;
  g.nodes[2].rows = {2, 4};
  g.nodes[3].rows = {3};

  nn::ParameterStore params(23);
  params.get_or_create("hidden", Shape{5, 4}, nn::Init::kUniformFanIn);
  gat::Gat net(params, gat::GatConfig{2, 2, 4, 0.2});

  nn::LossFn loss = [&](Tape& tape, nn::ParameterStore& store) {
    Tensor h_qc = store.get("hidden");
    Tensor init = gat::node_init_matrix(tape, g, h_qc);
    Tensor out = net.forward(tape, g, init);
    Tensor ones_row = Tensor::constant(Shape{1, out.rows()}, 1.0);
    Tensor ones_col = Tensor::constant(Shape{out.cols(), 1}, 1.0);
    Tensor folded = tape.matmul(tape.matmul(ones_row, out), ones_col);
    return tape.sigmoid(folded);
  };

  auto report = nn::finite_diff_check(loss, params, 1e-5, 1e-4);
  CHECK(report.ok());
  CHECK(report.checked > 0);
  for (const auto& f : report.failures)
    MESSAGE(f.name, "[", f.index, "] analytic=", f.analytic,
            " numeric=", f.numeric);
}
