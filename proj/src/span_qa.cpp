#include "quisg/span_qa.hpp"

#include <algorithm>
#include <cmath>

namespace quisg::spanqa {

using nn::Shape;
using nn::Tape;
using nn::Tensor;

UpdatedContext write_back(Tape& tape, const Tensor& h_c,
                          const graph::QuisgGraph& g,
                          const Tensor& node_states,
                          std::size_t context_begin) {
  if (node_states.rows() != g.n())
    throw DimensionError("node state rows " + std::to_string(node_states.rows()) +
                         " do not match node count " + std::to_string(g.n()));
  if (node_states.cols() != h_c.cols())
    throw DimensionError("node state width " + std::to_string(node_states.cols()) +
                         " does not match context width " +
                         std::to_string(h_c.cols()));
  std::vector<std::size_t> src_nodes;
  std::vector<std::size_t> dst_rows;
  for (std::size_t i = 0; i < g.n(); ++i) {
    const graph::Node& node = g.nodes[i];
    if (node.type != graph::NodeType::kDw && node.type != graph::NodeType::kDs)
      continue;
    for (std::size_t r : node.rows) {
      if (r < context_begin || r - context_begin >= h_c.rows())
        throw DimensionError("write-back row " + std::to_string(r) +
                             " is outside the context");
      src_nodes.push_back(i);
      dst_rows.push_back(r - context_begin);
    }
  }
  UpdatedContext out;
  out.update_mask.assign(h_c.rows(), 0);
  for (std::size_t r : dst_rows) out.update_mask[r] = 1;
  if (src_nodes.empty()) {
    out.h_c = h_c;
    return out;
  }
  Tensor updates = tape.gather_rows(node_states, std::move(src_nodes));
  out.h_c = tape.scatter_add_rows(h_c, updates, std::move(dst_rows));
  return out;
}

SpanHeads::SpanHeads(nn::ParameterStore& store, std::size_t d_h,
                     std::string prefix)
    : store_(store), d_h_(d_h), prefix_(std::move(prefix)) {
  store_.get_or_create(prefix_ + ".w_start", Shape{d_h_, 1}, nn::Init::kUniformFanIn);
  store_.get_or_create(prefix_ + ".w_end", Shape{d_h_, 1}, nn::Init::kUniformFanIn);
  store_.get_or_create(prefix_ + ".na.W", Shape{d_h_, 1}, nn::Init::kUniformFanIn);
  store_.get_or_create(prefix_ + ".na.b", Shape{1, 1}, nn::Init::kZeros);
}

SpanHeads::Output SpanHeads::forward(Tape& tape, const Tensor& h_c_updated,
                                     const Tensor& cls_row) const {
  if (h_c_updated.cols() != d_h_ || cls_row.cols() != d_h_ || cls_row.rows() != 1)
    throw DimensionError("span head width mismatch");
  Output out;
  out.start_logits = tape.matmul(h_c_updated, store_.get(prefix_ + ".w_start"));
  out.end_logits = tape.matmul(h_c_updated, store_.get(prefix_ + ".w_end"));
  out.p_na = tape.sigmoid(tape.add(tape.matmul(cls_row, store_.get(prefix_ + ".na.W")),
                                   store_.get(prefix_ + ".na.b")));
  return out;
}

nn::Tensor qa_loss(Tape& tape, const SpanHeads::Output& out, const QaTarget& target) {
  const double na_truth = target.answerable
                              ? (target.na_label_one_means_unanswerable ? 0.0 : 1.0)
                              : (target.na_label_one_means_unanswerable ? 1.0 : 0.0);
  Tensor j_na = tape.bce_sum(out.p_na, Tensor::scalar(na_truth));
  if (!target.answerable) return tape.scale(j_na, 0.5);
  if (!target.gold)
    throw PreconditionError("answerable question without a gold token span");
  const auto [a_st, a_ed] = *target.gold;
  Tensor j_ax = tape.add(tape.cross_entropy(out.start_logits, a_st),
                         tape.cross_entropy(out.end_logits, a_ed));
  return tape.add(j_ax, tape.scale(j_na, 0.5));
}

DecodeLayout make_decode_layout(const text::TokenSequence& seq,
                                const text::AlignmentMap& map,
                                const keyex::KeySet& keys) {
  const std::size_t c0 = seq.context_range.begin;
  const std::size_t lc = seq.context_range.size();
  DecodeLayout layout;
  layout.token_utterance.assign(lc, DecodeLayout::npos);
  layout.is_word.assign(lc, 0);
  layout.in_key_utterance.assign(lc, 0);
  for (std::size_t u = 0; u < map.utterance_token_span.size(); ++u) {
    const text::TokenRange& words = map.utterance_token_span[u];
    if (words.empty() && map.word_token_spans[u].empty()) continue;  // dropped
    const text::TokenRange& sp = map.speaker_token_spans[u];
    const std::size_t first = sp.empty() ? words.begin : sp.begin;
    const bool key = keys.contains(u);
    for (std::size_t t = first; t < words.end; ++t) {
      layout.token_utterance[t - c0] = u;
      if (key) layout.in_key_utterance[t - c0] = 1;
    }
    for (std::size_t t = words.begin; t < words.end; ++t) {
      const text::TokenKind kind = seq.kinds[t];
      layout.is_word[t - c0] = kind == text::TokenKind::kUtteranceWord ||
                               kind == text::TokenKind::kSceneWord;
    }
  }
  return layout;
}

namespace {

// Log-probabilities of scaled logits under one shared softmax.
std::vector<double> scaled_log_softmax(std::span<const double> logits,
                                       const std::vector<std::uint8_t>& in_key,
                                       double f) {
  std::vector<double> s(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    s[i] = logits[i] * (in_key[i] ? 1.0 : f);
  double m = s[0];
  for (double v : s) m = std::max(m, v);
  double sum = 0.0;
  for (double v : s) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  for (double& v : s) v -= lse;
  return s;
}

std::vector<std::size_t> top_by(const std::vector<std::size_t>& candidates,
                                const std::vector<double>& logp, std::size_t limit) {
  std::vector<std::size_t> order = candidates;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (logp[a] != logp[b]) return logp[a] > logp[b];
    return a < b;
  });
  if (order.size() > limit) order.resize(limit);
  return order;
}

}  // namespace

DecodeResult decode(std::span<const double> start_logits,
                    std::span<const double> end_logits,
                    const DecodeLayout& layout, const DecodeOptions& options) {
  const std::size_t lc = layout.token_utterance.size();
  if (start_logits.size() != lc || end_logits.size() != lc)
    throw DimensionError("logit length does not match the context layout");
  if (lc == 0 || options.beam == 0 || options.max_span_tokens == 0)
    throw PreconditionError("decode needs a non-empty context, beam, and span cap");

  const std::vector<double> logp_start =
      scaled_log_softmax(start_logits, layout.in_key_utterance, options.scale_f);
  const std::vector<double> logp_end =
      scaled_log_softmax(end_logits, layout.in_key_utterance, options.scale_f);

  std::vector<std::size_t> legal_starts;
  for (std::size_t i = 0; i < lc; ++i)
    if (layout.is_word[i]) legal_starts.push_back(i);
  if (legal_starts.empty())
    throw PreconditionError("context holds no legal answer tokens");

  std::vector<SpanPrediction> candidates;
  for (std::size_t s : top_by(legal_starts, logp_start, options.beam)) {
    const std::size_t u = layout.token_utterance[s];
    std::vector<std::size_t> ends;
    for (std::size_t j = s; j < lc && j - s < options.max_span_tokens; ++j) {
      if (layout.token_utterance[j] != u || !layout.is_word[j]) break;
      ends.push_back(j);
    }
    for (std::size_t e : top_by(ends, logp_end, options.beam))
      candidates.push_back({s, e, logp_start[s] + logp_end[e], u});
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const SpanPrediction& a, const SpanPrediction& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.start != b.start) return a.start < b.start;
              return a.end < b.end;
            });
  DecodeResult result;
  result.best = candidates.front();
  result.n_best.assign(candidates.begin(),
                       candidates.begin() +
                           static_cast<std::ptrdiff_t>(
                               std::min(candidates.size(), options.beam)));
  return result;
}

}  // namespace quisg::spanqa
