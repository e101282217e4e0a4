#include "quisg/encoder.hpp"

#include <cmath>

#include "quisg/tensor_io.hpp"

namespace quisg::enc {

using nn::Shape;
using nn::Tape;
using nn::Tensor;

nn::Tensor EncoderOutput::question_states(Tape& tape) const {
  return tape.slice_rows(h_qc, question.begin, question.end);
}

nn::Tensor EncoderOutput::context_states(Tape& tape) const {
  return tape.slice_rows(h_qc, context.begin, context.end);
}

nn::Tensor EncoderOutput::cls_state(Tape& tape) const {
  return tape.slice_rows(h_qc, 0, 1);
}

ToyEncoder::ToyEncoder(nn::ParameterStore& store, ToyEncoderConfig config,
                       std::string prefix)
    : store_(store), config_(config), prefix_(std::move(prefix)) {
  if (config_.d_h == 0 || config_.vocab == 0)
    throw PreconditionError("encoder dimensions must be positive");
  store_.get_or_create(prefix_ + ".embed",
                       Shape{config_.vocab, config_.d_h}, nn::Init::kUniformTenth);
  for (std::size_t p = 0; p < config_.mixing_layers; ++p) {
    const std::string base = prefix_ + ".mix" + std::to_string(p);
    store_.get_or_create(base + ".W", Shape{config_.d_h, config_.d_h},
                         nn::Init::kUniformFanIn);
    store_.get_or_create(base + ".b", Shape{1, config_.d_h}, nn::Init::kZeros);
  }
}

std::size_t ToyEncoder::hash_token(const std::string& token, std::size_t vocab) {
  // FNV-1a, 64-bit.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h % vocab);
}

namespace {

// Row i holds 1/|W_i| over columns [i - r, i + r] clamped to the sequence,
// so multiplying from the left takes a windowed mean.
Tensor window_mean_matrix(std::size_t n, std::size_t radius) {
  Tensor b = Tensor::zeros(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i > radius ? i - radius : 0;
    std::size_t hi = std::min(n - 1, i + radius);
    double w = 1.0 / static_cast<double>(hi - lo + 1);
    for (std::size_t j = lo; j <= hi; ++j) b.set(i, j, w);
  }
  return b;
}

Tensor position_matrix(std::size_t n, std::size_t d, double scale) {
  Tensor p = Tensor::zeros(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < d; j += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(d));
      double ang = static_cast<double>(i) * rate;
      p.set(i, j, scale * std::sin(ang));
      p.set(i, j + 1, scale * std::cos(ang));
    }
    if (d % 2 == 1) {
      double rate = std::pow(10000.0, -static_cast<double>(d - 1) / static_cast<double>(d));
      p.set(i, d - 1, scale * std::sin(static_cast<double>(i) * rate));
    }
  }
  return p;
}

}  // namespace

EncoderOutput ToyEncoder::encode(Tape& tape, const text::TokenSequence& seq,
                                 const std::string&) const {
  if (seq.size() == 0) throw PreconditionError("cannot encode an empty sequence");
  std::vector<std::size_t> ids(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i)
    ids[i] = hash_token(seq.tokens[i], config_.vocab);

  Tensor embed = store_.get(prefix_ + ".embed");
  Tensor x = tape.gather_rows(embed, std::move(ids));
  x = tape.add(x, position_matrix(seq.size(), config_.d_h, config_.position_scale));
  Tensor band = window_mean_matrix(seq.size(), config_.window_radius);
  for (std::size_t p = 0; p < config_.mixing_layers; ++p) {
    const std::string base = prefix_ + ".mix" + std::to_string(p);
    Tensor mixed = tape.matmul(band, x);
    Tensor y = tape.elu(tape.add_rowvec(tape.matmul(mixed, store_.get(base + ".W")),
                                        store_.get(base + ".b")));
    x = tape.add(x, y);
  }

  EncoderOutput out;
  out.h_qc = x;
  out.question = seq.question_range;
  out.context = seq.context_range;
  return out;
}

FileEncoder::FileEncoder(const std::filesystem::path& path) {
  for (io::NamedTensor& nt : io::read_tensors(path)) {
    if (nt.shape.rows == 0 || nt.shape.cols == 0)
      throw ParseError("encoder record '" + nt.name + "' is empty");
    if (d_h_ == 0) d_h_ = nt.shape.cols;
    if (nt.shape.cols != d_h_)
      throw ParseError("encoder record '" + nt.name + "' has width " +
                       std::to_string(nt.shape.cols) + ", expected " +
                       std::to_string(d_h_));
    records_.emplace(nt.name,
                     Tensor::from_values(nt.shape, std::move(nt.values)));
  }
  if (records_.empty())
    throw ParseError("encoder file " + path.string() + " holds no records");
}

EncoderOutput FileEncoder::encode(Tape&, const text::TokenSequence& seq,
                                  const std::string& sequence_id) const {
  auto it = records_.find(sequence_id);
  if (it == records_.end())
    throw LookupError("no encoder record for sequence id '" + sequence_id + "'");
  if (it->second.rows() != seq.size())
    throw DimensionError("encoder record '" + sequence_id + "' has " +
                         std::to_string(it->second.rows()) + " rows for a sequence of " +
                         std::to_string(seq.size()) + " tokens");
  EncoderOutput out;
  out.h_qc = it->second;
  out.question = seq.question_range;
  out.context = seq.context_range;
  return out;
}

}  // namespace quisg::enc
