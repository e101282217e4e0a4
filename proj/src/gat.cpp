#include "quisg/gat.hpp"

#include <array>

namespace quisg::gat {

using nn::Shape;
using nn::Tape;
using nn::Tensor;

void GatConfig::validate() const {
  if (layers == 0 || heads == 0 || d_h == 0)
    throw PreconditionError("layers, heads, and d_h must be positive");
  if (d_h % heads != 0)
    throw DimensionError("head count " + std::to_string(heads) +
                         " does not divide d_h " + std::to_string(d_h));
}

nn::Tensor node_init_matrix(Tape& tape, const graph::QuisgGraph& g,
                            const Tensor& h_qc) {
  if (g.n() == 0) throw PreconditionError("graph has no nodes");
  std::vector<Tensor> rows;
  rows.reserve(g.n());
  for (const graph::Node& node : g.nodes) {
    if (node.rows.empty())
      throw PreconditionError("graph node with no init rows");
    for (std::size_t r : node.rows)
      if (r >= h_qc.rows())
        throw DimensionError("node init row " + std::to_string(r) +
                             " outside hidden matrix of " +
                             std::to_string(h_qc.rows()) + " rows");
    if (node.pool == graph::PoolKind::kSingleRow)
      rows.push_back(tape.gather_rows(h_qc, {node.rows[0]}));
    else
      rows.push_back(tape.meanpool_rows(h_qc, node.rows));
  }
  return tape.concat_rows(rows);
}

Gat::Gat(nn::ParameterStore& store, GatConfig config, std::string prefix)
    : store_(store), config_(config), prefix_(std::move(prefix)) {
  config_.validate();
  const std::size_t dk = config_.d_head();
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (std::size_t h = 0; h < config_.heads; ++h) {
      const std::string base =
          prefix_ + ".l" + std::to_string(l) + ".h" + std::to_string(h);
      store_.get_or_create(base + ".Wq", Shape{dk + 4, dk}, nn::Init::kUniformFanIn);
      store_.get_or_create(base + ".Wk", Shape{dk + 4, dk}, nn::Init::kUniformFanIn);
      store_.get_or_create(base + ".a", Shape{1, 2 * dk}, nn::Init::kUniformFanIn);
      store_.get_or_create(base + ".Wv", Shape{dk, dk}, nn::Init::kUniformFanIn);
    }
  }
}

nn::Tensor Gat::forward(Tape& tape, const graph::QuisgGraph& g,
                        const Tensor& node_inits,
                        std::vector<Tensor>* attentions) const {
  const std::size_t n = g.n();
  if (node_inits.rows() != n)
    throw DimensionError("node init rows " + std::to_string(node_inits.rows()) +
                         " do not match node count " + std::to_string(n));
  if (node_inits.cols() != config_.d_h)
    throw DimensionError("node init width " + std::to_string(node_inits.cols()) +
                         " does not match d_h " + std::to_string(config_.d_h));
  const std::size_t dk = config_.d_head();

  Tensor onehot = Tensor::zeros(Shape{n, 4});
  for (std::size_t i = 0; i < n; ++i)
    onehot.set(i, static_cast<std::size_t>(g.nodes[i].type), 1.0);

  Tensor mask = Tensor::zeros(Shape{n, n});
  for (std::size_t i = 0; i < n * n; ++i)
    mask.values_mut()[i] = g.adjacency[i] ? 1.0 : 0.0;

  const Tensor ones_row = Tensor::constant(Shape{1, n}, 1.0);
  const Tensor ones_col = Tensor::constant(Shape{n, 1}, 1.0);

  Tensor h = node_inits;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(config_.heads);
    for (std::size_t hd = 0; hd < config_.heads; ++hd) {
      const std::string base =
          prefix_ + ".l" + std::to_string(l) + ".h" + std::to_string(hd);
      Tensor hs = tape.slice_cols(h, hd * dk, (hd + 1) * dk);
      std::array<Tensor, 2> typed_parts{hs, onehot};
      Tensor typed = tape.concat_cols(typed_parts);
      Tensor q = tape.matmul(typed, store_.get(base + ".Wq"));
      Tensor k = tape.matmul(typed, store_.get(base + ".Wk"));
      Tensor a = store_.get(base + ".a");
      Tensor a_q = tape.slice_cols(a, 0, dk);
      Tensor a_k = tape.slice_cols(a, dk, 2 * dk);
      // c[i][j] = a_q . q_i + a_k . k_j, materialized by rank-1 broadcasts.
      Tensor qv = tape.matmul(q, tape.transpose(a_q));  // n x 1
      Tensor kv = tape.matmul(k, tape.transpose(a_k));  // n x 1
      Tensor c = tape.add(tape.matmul(qv, ones_row),
                          tape.matmul(ones_col, tape.transpose(kv)));
      Tensor alpha = tape.softmax_rows(tape.leaky_relu(c, config_.leaky_slope), &mask);
      if (attentions) attentions->push_back(alpha);
      Tensor v = tape.matmul(hs, store_.get(base + ".Wv"));
      head_outputs.push_back(tape.elu(tape.matmul(alpha, v)));
    }
    h = tape.concat_cols(head_outputs);
  }
  return h;
}

}  // namespace quisg::gat
