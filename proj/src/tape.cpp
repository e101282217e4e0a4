#include "quisg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "quisg/kernels.hpp"

namespace quisg::nn {

namespace {

constexpr double kProbEps = 1e-12;

double clamp_prob(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       to_string(a.shape()) + " and " + to_string(b.shape()));
}

}  // namespace

bool Tape::track(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor Tape::make_output(Shape shape, bool requires_grad) {
  return Tensor::zeros(shape, requires_grad);
}

void Tape::ensure_grad(const StoragePtr& st) {
  if (st->grad.empty()) st->grad.assign(st->values.size(), 0.0);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) dim_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_output({m, n}, track({&a, &b}));
  kernels::matmul_nn(a.data(), b.data(), out.data_mut(), m, k, n);
  check_finite(out, "matmul");
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    record([sa, sb, so, m, k, n] {
      if (!grad_ready(so)) return;
      if (sa->requires_grad) {
        ensure_grad(sa);
        kernels::matmul_nt(so->grad.data(), sb->values.data(), sa->grad.data(),
                           m, n, k, /*accumulate=*/true);
      }
      if (sb->requires_grad) {
        ensure_grad(sb);
        kernels::matmul_tn(sa->values.data(), so->grad.data(), sb->grad.data(),
                           k, m, n, /*accumulate=*/true);
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = make_output({c, r}, track({&a}));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.set(j, i, a.at(i, j));
  }
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, r, c] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          sa->grad[i * c + j] += so->grad[j * r + i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) dim_error("add", a, b);
  Tensor out = make_output(a.shape(), track({&a, &b}));
  kernels::add(a.data(), b.data(), out.data_mut(), a.size());
  check_finite(out, "add");
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    record([sa, sb, so] {
      if (!grad_ready(so)) return;
      for (auto& st : {sa, sb}) {
        if (!st->requires_grad) continue;
        ensure_grad(st);
        for (std::size_t i = 0; i < so->grad.size(); ++i) {
          st->grad[i] += so->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) dim_error("add_rowvec", x, b);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = make_output({r, c}, track({&x, &b}));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.set(i, j, x.at(i, j) + b.at(0, j));
  }
  check_finite(out, "add_rowvec");
  if (out.requires_grad()) {
    auto sx = x.storage(), sb = b.storage(), so = out.storage();
    record([sx, sb, so, r, c] {
      if (!grad_ready(so)) return;
      if (sx->requires_grad) {
        ensure_grad(sx);
        for (std::size_t i = 0; i < r * c; ++i) sx->grad[i] += so->grad[i];
      }
      if (sb->requires_grad) {
        ensure_grad(sb);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            sb->grad[j] += so->grad[i * c + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) dim_error("mul", a, b);
  Tensor out = make_output(a.shape(), track({&a, &b}));
  kernels::mul(a.data(), b.data(), out.data_mut(), a.size());
  check_finite(out, "mul");
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    record([sa, sb, so] {
      if (!grad_ready(so)) return;
      if (sa->requires_grad) {
        ensure_grad(sa);
        for (std::size_t i = 0; i < so->grad.size(); ++i) {
          sa->grad[i] += so->grad[i] * sb->values[i];
        }
      }
      if (sb->requires_grad) {
        ensure_grad(sb);
        for (std::size_t i = 0; i < so->grad.size(); ++i) {
          sb->grad[i] += so->grad[i] * sa->values[i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  Tensor out = make_output(a.shape(), track({&a}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data_mut()[i] = a.data()[i] * factor;
  }
  check_finite(out, "scale");
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, factor] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        sa->grad[i] += so->grad[i] * factor;
      }
    });
  }
  return out;
}

Tensor Tape::concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.rows() != r) dim_error("concat_cols", parts[0], p);
    c += p.cols();
    rg = rg || (recording_ && p.requires_grad());
  }
  Tensor out = make_output({r, c}, rg);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) {
        out.set(i, off + j, p.at(i, j));
      }
    }
    off += p.cols();
  }
  if (out.requires_grad()) {
    std::vector<StoragePtr> srcs;
    for (const Tensor& p : parts) srcs.push_back(p.storage());
    auto so = out.storage();
    record([srcs, so, r, c] {
      if (!grad_ready(so)) return;
      std::size_t off = 0;
      for (const auto& st : srcs) {
        const std::size_t pc = st->shape.cols;
        if (st->requires_grad) {
          ensure_grad(st);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < pc; ++j) {
              st->grad[i * pc + j] += so->grad[i * c + off + j];
            }
          }
        }
        off += pc;
      }
    });
  }
  return out;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.cols() != c) dim_error("concat_rows", parts[0], p);
    r += p.rows();
    rg = rg || (recording_ && p.requires_grad());
  }
  Tensor out = make_output({r, c}, rg);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(),
              out.values_mut().begin() + off * c);
    off += p.rows();
  }
  if (out.requires_grad()) {
    std::vector<StoragePtr> srcs;
    for (const Tensor& p : parts) srcs.push_back(p.storage());
    auto so = out.storage();
    record([srcs, so, c] {
      if (!grad_ready(so)) return;
      std::size_t off = 0;
      for (const auto& st : srcs) {
        const std::size_t n = st->values.size();
        if (st->requires_grad) {
          ensure_grad(st);
          for (std::size_t i = 0; i < n; ++i) {
            st->grad[i] += so->grad[off * c + i];
          }
        }
        off += st->shape.rows;
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  if (r0 > r1 || r1 > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") out of " +
                         std::to_string(a.rows()) + " rows");
  }
  const std::size_t c = a.cols();
  Tensor out = make_output({r1 - r0, c}, track({&a}));
  std::copy(a.values().begin() + r0 * c, a.values().begin() + r1 * c,
            out.values_mut().begin());
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, r0, c] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        sa->grad[r0 * c + i] += so->grad[i];
      }
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  if (c0 > c1 || c1 > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") out of " +
                         std::to_string(a.cols()) + " cols");
  }
  const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
  Tensor out = make_output({r, w}, track({&a}));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out.set(i, j, a.at(i, c0 + j));
  }
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, r, c, c0, w] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          sa->grad[i * c + c0 + j] += so->grad[i * w + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
  const std::size_t c = a.cols();
  for (std::size_t i : idx) {
    if (i >= a.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(i) +
                           " out of " + std::to_string(a.rows()) + " rows");
    }
  }
  Tensor out = make_output({idx.size(), c}, track({&a}));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    std::copy(a.values().begin() + idx[j] * c,
              a.values().begin() + (idx[j] + 1) * c,
              out.values_mut().begin() + j * c);
  }
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, idx = std::move(idx), c] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        for (std::size_t k = 0; k < c; ++k) {
          sa->grad[idx[j] * c + k] += so->grad[j * c + k];
        }
      }
    });
  }
  return out;
}

Tensor Tape::scatter_add_rows(const Tensor& base, const Tensor& src,
                              std::vector<std::size_t> dst) {
  if (src.cols() != base.cols() || src.rows() != dst.size()) {
    dim_error("scatter_add_rows", base, src);
  }
  const std::size_t c = base.cols();
  for (std::size_t i : dst) {
    if (i >= base.rows()) {
      throw DimensionError("scatter_add_rows: destination row " +
                           std::to_string(i) + " out of " +
                           std::to_string(base.rows()));
    }
  }
  Tensor out = make_output(base.shape(), track({&base, &src}));
  std::copy(base.values().begin(), base.values().end(),
            out.values_mut().begin());
  for (std::size_t j = 0; j < dst.size(); ++j) {
    for (std::size_t k = 0; k < c; ++k) {
      out.values_mut()[dst[j] * c + k] += src.at(j, k);
    }
  }
  check_finite(out, "scatter_add_rows");
  if (out.requires_grad()) {
    auto sb = base.storage(), ss = src.storage(), so = out.storage();
    record([sb, ss, so, dst = std::move(dst), c] {
      if (!grad_ready(so)) return;
      if (sb->requires_grad) {
        ensure_grad(sb);
        for (std::size_t i = 0; i < so->grad.size(); ++i) {
          sb->grad[i] += so->grad[i];
        }
      }
      if (ss->requires_grad) {
        ensure_grad(ss);
        for (std::size_t j = 0; j < dst.size(); ++j) {
          for (std::size_t k = 0; k < c; ++k) {
            ss->grad[j * c + k] += so->grad[dst[j] * c + k];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out = make_output(a.shape(), track({&a}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data_mut()[i] =
        x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                 : std::exp(x) / (1.0 + std::exp(x));
  }
  check_finite(out, "sigmoid");
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        const double y = so->values[i];
        sa->grad[i] += so->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor Tape::elu(const Tensor& a) {
  Tensor out = make_output(a.shape(), track({&a}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data_mut()[i] = x > 0.0 ? x : std::expm1(x);
  }
  check_finite(out, "elu");
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        const double x = sa->values[i];
        sa->grad[i] += so->grad[i] * (x > 0.0 ? 1.0 : std::exp(x));
      }
    });
  }
  return out;
}

Tensor Tape::leaky_relu(const Tensor& a, double negative_slope) {
  Tensor out = make_output(a.shape(), track({&a}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data_mut()[i] = x > 0.0 ? x : negative_slope * x;
  }
  check_finite(out, "leaky_relu");
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, negative_slope] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        sa->grad[i] +=
            so->grad[i] * (sa->values[i] > 0.0 ? 1.0 : negative_slope);
      }
    });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a, const Tensor* mask) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<std::uint8_t> m(r * c, 1);
  if (mask != nullptr) {
    if (!(mask->shape() == a.shape())) dim_error("softmax_rows", a, *mask);
    for (std::size_t i = 0; i < r * c; ++i) {
      m[i] = mask->data()[i] != 0.0 ? 1 : 0;
    }
  }
  Tensor out = make_output({r, c}, track({&a}));
  const std::ptrdiff_t bad =
      kernels::softmax_rows_masked(a.data(), m.data(), out.data_mut(), r, c);
  if (bad >= 0) {
    throw NumericError("softmax_rows: row " + std::to_string(bad) +
                       " is fully masked");
  }
  check_finite(out, "softmax_rows");
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, m = std::move(m), r, c] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          if (m[i * c + j]) dot += so->grad[i * c + j] * so->values[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
          if (m[i * c + j]) {
            sa->grad[i * c + j] +=
                so->values[i * c + j] * (so->grad[i * c + j] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::maxpool_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  if (r0 >= r1 || r1 > a.rows()) {
    throw DimensionError("maxpool_rows: empty or out-of-range interval [" +
                         std::to_string(r0) + ", " + std::to_string(r1) + ")");
  }
  const std::size_t c = a.cols();
  Tensor out = make_output({1, c}, track({&a}));
  std::vector<std::size_t> arg(c, r0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = a.at(r0, j);
    for (std::size_t i = r0 + 1; i < r1; ++i) {
      if (a.at(i, j) > best) {
        best = a.at(i, j);
        arg[j] = i;
      }
    }
    out.set(0, j, best);
  }
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, arg = std::move(arg), c] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t j = 0; j < c; ++j) {
        sa->grad[arg[j] * c + j] += so->grad[j];
      }
    });
  }
  return out;
}

Tensor Tape::meanpool_rows(const Tensor& a, std::vector<std::size_t> idx) {
  if (idx.empty()) throw DimensionError("meanpool_rows: empty index set");
  const std::size_t c = a.cols();
  for (std::size_t i : idx) {
    if (i >= a.rows()) {
      throw DimensionError("meanpool_rows: index " + std::to_string(i) +
                           " out of " + std::to_string(a.rows()) + " rows");
    }
  }
  Tensor out = make_output({1, c}, track({&a}));
  for (std::size_t j = 0; j < c; ++j) {
    double sum = 0.0;
    for (std::size_t i : idx) sum += a.at(i, j);
    out.set(0, j, sum / static_cast<double>(idx.size()));
  }
  check_finite(out, "meanpool_rows");
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, idx = std::move(idx), c] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      const double inv = 1.0 / static_cast<double>(idx.size());
      for (std::size_t i : idx) {
        for (std::size_t j = 0; j < c; ++j) {
          sa->grad[i * c + j] += so->grad[j] * inv;
        }
      }
    });
  }
  return out;
}

Tensor Tape::bce_sum(const Tensor& probs, const Tensor& labels) {
  if (!(probs.shape() == labels.shape())) dim_error("bce_sum", probs, labels);
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs.data()[i]);
    const double y = labels.data()[i];
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  Tensor out = make_output({1, 1}, track({&probs}));
  out.data_mut()[0] = loss;
  check_finite(out, "bce_sum");
  if (out.requires_grad()) {
    auto sp = probs.storage(), sl = labels.storage(), so = out.storage();
    record([sp, sl, so] {
      if (!grad_ready(so)) return;
      ensure_grad(sp);
      const double g = so->grad[0];
      for (std::size_t i = 0; i < sp->values.size(); ++i) {
        const double p = clamp_prob(sp->values[i]);
        const double y = sl->values[i];
        sp->grad[i] += g * (p - y) / (p * (1.0 - p));
      }
    });
  }
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.rows() != 1 && logits.cols() != 1) {
    throw DimensionError("cross_entropy: logits must be a vector, got " +
                         to_string(logits.shape()));
  }
  const std::size_t n = logits.size();
  if (target >= n) {
    throw DimensionError("cross_entropy: target " + std::to_string(target) +
                         " out of " + std::to_string(n));
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, logits.data()[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(logits.data()[i] - mx);
  const double lse = mx + std::log(sum);
  Tensor out = make_output({1, 1}, track({&logits}));
  out.data_mut()[0] = lse - logits.data()[target];
  check_finite(out, "cross_entropy");
  if (out.requires_grad()) {
    auto sl = logits.storage(), so = out.storage();
    record([sl, so, target, lse] {
      if (!grad_ready(so)) return;
      ensure_grad(sl);
      const double g = so->grad[0];
      for (std::size_t i = 0; i < sl->values.size(); ++i) {
        const double p = std::exp(sl->values[i] - lse);
        sl->grad[i] += g * (p - (i == target ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor Tape::custom_unary(const Tensor& a, const char* name, UnaryForward fwd,
                          UnaryBackward dfdx) {
  Tensor out = make_output(a.shape(), track({&a}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data_mut()[i] = fwd(a.data()[i]);
  }
  check_finite(out, name);
  if (out.requires_grad()) {
    auto sa = a.storage(), so = out.storage();
    record([sa, so, dfdx = std::move(dfdx)] {
      if (!grad_ready(so)) return;
      ensure_grad(sa);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        sa->grad[i] += so->grad[i] * dfdx(sa->values[i], so->values[i]);
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw PreconditionError("backward: loss must be a scalar, got " +
                            to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw PreconditionError(
        "backward: loss does not depend on any trainable tensor");
  }
  if (backward_done_) {
    throw PreconditionError("backward: tape already replayed");
  }
  backward_done_ = true;
  loss.storage()->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

}  // namespace quisg::nn
