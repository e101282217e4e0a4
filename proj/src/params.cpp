#include "quisg/params.hpp"

#include <algorithm>
#include <cmath>

#include "quisg/tensor_io.hpp"

namespace quisg::nn {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

const std::string kStepKey = "__meta__/step";

}  // namespace

ParameterStore::ParameterStore(std::uint64_t seed) : rng_(seed), seed_(seed) {}

Tensor ParameterStore::get_or_create(const std::string& name, Shape shape,
                                     Init init) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    Tensor existing = entries_[it->second].second.value;
    if (!(existing.shape() == shape)) {
      throw LookupError("parameter '" + name + "' exists with shape " +
                        to_string(existing.shape()) + ", requested " +
                        to_string(shape));
    }
    return existing;
  }
  Tensor value = Tensor::zeros(shape, /*requires_grad=*/true);
  if (init != Init::kZeros) {
    const double bound = init == Init::kUniformFanIn
                             ? 1.0 / std::sqrt(static_cast<double>(shape.rows))
                             : 0.1;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : value.values_mut()) v = dist(rng_);
  }
  Entry e{value, std::vector<double>(shape.size(), 0.0),
          std::vector<double>(shape.size(), 0.0)};
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(e));
  return value;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw LookupError("no parameter named '" + name + "'");
  }
  return entries_[it->second].second.value;
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

void ParameterStore::zero_grads() {
  for (auto& [name, entry] : entries_) {
    entry.value.storage()->grad.clear();
  }
}

void ParameterStore::adam_step(double lr) {
  for (auto& [name, entry] : entries_) {
    if (!entry.value.has_grad()) {
      throw PreconditionError("missing gradient for parameter '" + name + "'");
    }
  }
  const std::uint64_t t = step_ + 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (auto& [name, entry] : entries_) {
    auto st = entry.value.storage();
    for (std::size_t i = 0; i < st->values.size(); ++i) {
      const double g = st->grad[i];
      entry.m[i] = kBeta1 * entry.m[i] + (1.0 - kBeta1) * g;
      entry.v[i] = kBeta2 * entry.v[i] + (1.0 - kBeta2) * g * g;
      const double mhat = entry.m[i] / bc1;
      const double vhat = entry.v[i] / bc2;
      st->values[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
    st->grad.clear();
  }
  step_ = t;
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::vector<io::NamedTensor> out;
  std::vector<std::string> sorted = names();
  std::sort(sorted.begin(), sorted.end());
  for (const std::string& name : sorted) {
    const Entry& e = entries_[index_.at(name)].second;
    out.push_back({name, e.value.shape(),
                   {e.value.values().begin(), e.value.values().end()}});
    out.push_back({name + "#adam_m", e.value.shape(), e.m});
    out.push_back({name + "#adam_v", e.value.shape(), e.v});
  }
  out.push_back({kStepKey, Shape{1, 1}, {static_cast<double>(step_)}});
  io::write_tensors(path, out);
}

void ParameterStore::load(const std::filesystem::path& path) {
  const auto tensors = io::read_tensors(path);
  for (const io::NamedTensor& t : tensors) {
    if (t.name == kStepKey) {
      step_ = static_cast<std::uint64_t>(t.values.at(0));
      continue;
    }
    const auto hash_pos = t.name.rfind("#adam_");
    const std::string base =
        hash_pos == std::string::npos ? t.name : t.name.substr(0, hash_pos);
    auto it = index_.find(base);
    if (it == index_.end()) {
      if (hash_pos != std::string::npos) {
        throw LookupError("checkpoint has optimizer state for unknown '" +
                          base + "'");
      }
      Tensor value = Tensor::from_values(t.shape, t.values, true);
      Entry e{value, std::vector<double>(t.shape.size(), 0.0),
              std::vector<double>(t.shape.size(), 0.0)};
      index_.emplace(t.name, entries_.size());
      entries_.emplace_back(t.name, std::move(e));
      continue;
    }
    Entry& e = entries_[it->second].second;
    if (!(e.value.shape() == t.shape)) {
      throw LookupError("checkpoint tensor '" + t.name + "' has shape " +
                        to_string(t.shape) + ", model expects " +
                        to_string(e.value.shape()));
    }
    if (hash_pos == std::string::npos) {
      std::copy(t.values.begin(), t.values.end(),
                e.value.values_mut().begin());
    } else if (t.name.ends_with("#adam_m")) {
      e.m = t.values;
    } else {
      e.v = t.values;
    }
  }
}

GradCheckReport finite_diff_check(const LossFn& loss_fn, ParameterStore& params,
                                  double h, double tol) {
  const auto eval = [&] {
    Tape tape(/*recording=*/false);
    return loss_fn(tape, params).value();
  };
  const double base1 = eval();
  const double base2 = eval();
  if (base1 != base2) {
    throw PreconditionError(
        "finite_diff_check: loss function is not deterministic (" +
        std::to_string(base1) + " vs " + std::to_string(base2) + ")");
  }

  params.zero_grads();
  std::unordered_map<std::string, std::vector<double>> analytic;
  {
    Tape tape(/*recording=*/true);
    Tensor loss = loss_fn(tape, params);
    tape.backward(loss);
    for (const std::string& name : params.names()) {
      analytic[name] = params.get(name).grad();
    }
  }
  params.zero_grads();

  GradCheckReport report;
  for (const std::string& name : params.names()) {
    Tensor p = params.get(name);
    auto vals = p.values_mut();
    const auto& grads = analytic[name];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double up = eval();
      vals[i] = saved - h;
      const double down = eval();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double rel =
          std::abs(grads[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++report.checked;
      if (rel > tol) {
        report.failures.push_back({name, i, grads[i], numeric, rel});
      }
    }
  }
  return report;
}

}  // namespace quisg::nn
