#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quisg/graph.hpp"
#include "quisg/key_extractor.hpp"
#include "quisg/params.hpp"
#include "quisg/tape.hpp"
#include "quisg/tensor.hpp"

namespace quisg::spanqa {

// Context rows after the additive node write-back. update_mask flags the
// context-local rows that received a node state; all other rows equal the
// input exactly.
struct UpdatedContext {
  nn::Tensor h_c;
  std::vector<std::uint8_t> update_mask;
};

// Adds every dw node's final state onto its own token row and every ds
// node's state onto each token of that speaker's name across their key
// utterances. h_c is context-local; node row references are global and
// are shifted by context_begin.
UpdatedContext write_back(nn::Tape& tape, const nn::Tensor& h_c,
                          const graph::QuisgGraph& g,
                          const nn::Tensor& node_states,
                          std::size_t context_begin);

class SpanHeads {
 public:
  SpanHeads(nn::ParameterStore& store, std::size_t d_h,
            std::string prefix = "heads");

  struct Output {
    nn::Tensor start_logits;  // L_C x 1
    nn::Tensor end_logits;    // L_C x 1
    nn::Tensor p_na;          // 1 x 1
  };

  // cls_row: the 1 x d_h hidden row of the leading CLS token, untouched by
  // write-back.
  Output forward(nn::Tape& tape, const nn::Tensor& h_c_updated,
                 const nn::Tensor& cls_row) const;

 private:
  nn::ParameterStore& store_;
  std::size_t d_h_;
  std::string prefix_;
};

struct QaTarget {
  // Context-local token interval of the gold span, end inclusive.
  std::optional<std::pair<std::size_t, std::size_t>> gold;
  bool answerable = true;
  // When true, the answerability label is 1 for unanswerable questions.
  bool na_label_one_means_unanswerable = true;
};

// Cross-entropy over start and end distributions plus 0.5 * binary
// cross-entropy on p_na. Unanswerable questions contribute only the
// answerability term.
nn::Tensor qa_loss(nn::Tape& tape, const SpanHeads::Output& out,
                   const QaTarget& target);

struct SpanPrediction {
  std::size_t start = 0;  // context-local, inclusive
  std::size_t end = 0;
  double score = 0.0;  // log p_start + log p_end
  std::size_t utterance = 0;

  bool operator==(const SpanPrediction&) const = default;
};

struct DecodeOptions {
  double scale_f = 0.5;
  std::size_t beam = 5;
  std::size_t max_span_tokens = 30;
};

struct DecodeResult {
  SpanPrediction best;
  std::vector<SpanPrediction> n_best;
};

// Context-local layout of legal spans, derived once per sequence.
struct DecodeLayout {
  // Owning utterance per context-local token, or npos.
  std::vector<std::size_t> token_utterance;
  // Token is a text word (UTTERANCE_WORD or SCENE_WORD).
  std::vector<std::uint8_t> is_word;
  // Token belongs to a key utterance (any kind, separators excluded).
  std::vector<std::uint8_t> in_key_utterance;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

DecodeLayout make_decode_layout(const text::TokenSequence& seq,
                                const text::AlignmentMap& map,
                                const keyex::KeySet& keys);

// Beam search over legal spans: starts and ends are word tokens inside
// one utterance, spans run at most max_span_tokens. Logits are scaled by
// 1 on key-utterance tokens and scale_f elsewhere before the softmax.
// With beam >= L_C the result equals exhaustive enumeration.
DecodeResult decode(std::span<const double> start_logits,
                    std::span<const double> end_logits,
                    const DecodeLayout& layout, const DecodeOptions& options);

}  // namespace quisg::spanqa
