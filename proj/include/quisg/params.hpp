#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "quisg/tape.hpp"
#include "quisg/tensor.hpp"

namespace quisg::nn {

enum class Init {
  kZeros,
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in = rows (input width
  // under the x*W convention).
  kUniformFanIn,
  // uniform(-0.1, 0.1) regardless of shape; used for embedding tables,
  // where the row count is a vocabulary size, not a fan-in.
  kUniformTenth,
};

// Named trainable tensors with per-parameter Adam state. Creation order is
// part of the architecture: the same seed and the same get_or_create
// sequence reproduce bit-identical initial values.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed);

  Tensor get_or_create(const std::string& name, Shape shape, Init init);
  Tensor get(const std::string& name) const;  // LookupError when absent
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;  // creation order
  std::size_t size() const { return entries_.size(); }

  // Drops every gradient buffer; adam_step treats a dropped buffer as a
  // missing gradient.
  void zero_grads();

  // One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over all parameters.
  // Throws PreconditionError naming any parameter without a gradient.
  // Gradients are consumed (cleared) by the step.
  void adam_step(double lr);

  std::uint64_t step_count() const { return step_; }
  std::uint64_t seed() const { return seed_; }

  // Binary checkpoint holding values, Adam moments, and the step counter.
  // Round-trips bit-exactly.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  struct Entry {
    Tensor value;
    std::vector<double> m;
    std::vector<double> v;
  };

  std::vector<std::pair<std::string, Entry>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::mt19937_64 rng_;
  std::uint64_t seed_;
  std::uint64_t step_ = 0;
};

struct GradCheckFailure {
  std::string name;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

// Builds the loss through the given tape; must be deterministic.
using LossFn = std::function<Tensor(Tape&, ParameterStore&)>;

// Central-difference check of every parameter entry:
//   |analytic - numeric| / max(1, |numeric|) <= tol.
// Runs the loss twice up front and throws PreconditionError if the two
// baseline values differ (non-deterministic loss).
GradCheckReport finite_diff_check(const LossFn& loss_fn, ParameterStore& params,
                                  double h, double tol);

}  // namespace quisg::nn
