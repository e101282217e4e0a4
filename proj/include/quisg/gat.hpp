#pragma once

#include <string>
#include <vector>

#include "quisg/graph.hpp"
#include "quisg/params.hpp"
#include "quisg/tape.hpp"
#include "quisg/tensor.hpp"

namespace quisg::gat {

struct GatConfig {
  std::size_t layers = 5;
  std::size_t heads = 2;
  std::size_t d_h = 32;
  double leaky_slope = 0.2;

  std::size_t d_head() const { return d_h / heads; }
  void validate() const;  // heads must divide d_h
};

// Builds the node-init matrix (n x d_h) by pooling the rows each node
// references in the joint hidden matrix.
nn::Tensor node_init_matrix(nn::Tape& tape, const graph::QuisgGraph& g,
                            const nn::Tensor& h_qc);

// T-layer multi-head graph attention conditioned on node types: each
// node state is concatenated with its one-hot type before the query/key
// projections, attention is a masked softmax over graph neighbors, and
// head outputs are concatenated back to width d_h.
class Gat {
 public:
  Gat(nn::ParameterStore& store, GatConfig config, std::string prefix = "gat");

  // node_inits: n x d_h. Returns the final states (n x d_h). When
  // attentions is non-null, every layer's per-head attention matrix
  // (n x n) is appended in (layer, head) order.
  nn::Tensor forward(nn::Tape& tape, const graph::QuisgGraph& g,
                     const nn::Tensor& node_inits,
                     std::vector<nn::Tensor>* attentions = nullptr) const;

  const GatConfig& config() const { return config_; }

 private:
  nn::ParameterStore& store_;
  GatConfig config_;
  std::string prefix_;
};

}  // namespace quisg::gat
