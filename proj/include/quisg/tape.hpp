#pragma once

#include <functional>
#include <span>
#include <vector>

#include "quisg/tensor.hpp"

namespace quisg::nn {

// Records every primitive it executes and replays them strictly in reverse
// for the backward pass. Gradients accumulate additively, so a tensor
// feeding several consumers receives the sum of their contributions.
//
// A tape and the tensors it produced are confined to one thread. Run
// backward() at most once per tape.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t num_records() const { return records_.size(); }

  // --- primitives (forward + recorded backward) ---

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  // x (r x c) plus a row vector (1 x c) added to every row.
  Tensor add_rowvec(const Tensor& x, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);

  Tensor concat_cols(std::span<const Tensor> parts);
  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
  Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
  Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx);
  // out = base; out[dst[j]] += src[j] for every row j of src. Repeated
  // destinations accumulate.
  Tensor scatter_add_rows(const Tensor& base, const Tensor& src,
                          std::vector<std::size_t> dst);

  Tensor sigmoid(const Tensor& a);
  Tensor elu(const Tensor& a);
  Tensor leaky_relu(const Tensor& a, double negative_slope);

  // Row-wise softmax. When mask is given (same shape, nonzero = keep),
  // masked entries are exactly 0 and each unmasked row sums to 1. The mask
  // is a constant; no gradient flows through it.
  Tensor softmax_rows(const Tensor& a, const Tensor* mask = nullptr);

  // Column-wise max over rows [r0, r1). Ties route the gradient to the
  // first maximal row.
  Tensor maxpool_rows(const Tensor& a, std::size_t r0, std::size_t r1);
  Tensor meanpool_rows(const Tensor& a, std::vector<std::size_t> idx);

  // Summed binary cross-entropy: -sum_i [y_i log p_i + (1-y_i) log(1-p_i)].
  // probs and labels have identical shapes; labels are constants.
  // Probabilities are clamped to [1e-12, 1-1e-12] inside the logs.
  Tensor bce_sum(const Tensor& probs, const Tensor& labels);

  // -log softmax(logits)[target]; logits must have size rows*cols with
  // either one row or one column.
  Tensor cross_entropy(const Tensor& logits, std::size_t target);

  // Extension point: an elementwise unary op with caller-supplied forward
  // and backward. backward(in, out, gout, gin_accum) must add its
  // contribution into gin_accum.
  using UnaryForward = std::function<double(double)>;
  using UnaryBackward = std::function<double(double in, double out)>;
  Tensor custom_unary(const Tensor& a, const char* name, UnaryForward fwd,
                      UnaryBackward dfdx);

  // Seeds d(loss)/d(loss) = 1 and replays all records in reverse.
  void backward(const Tensor& loss);

 private:
  using StoragePtr = std::shared_ptr<detail::Storage>;

  bool track(std::initializer_list<const Tensor*> inputs) const;
  Tensor make_output(Shape shape, bool requires_grad);
  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

  static void ensure_grad(const StoragePtr& st);
  static bool grad_ready(const StoragePtr& st) { return !st->grad.empty(); }

  std::vector<std::function<void()>> records_;
  bool recording_ = true;
  bool backward_done_ = false;
};

}  // namespace quisg::nn
