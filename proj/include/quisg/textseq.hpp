#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "quisg/corpus.hpp"
#include "quisg/errors.hpp"

namespace quisg::text {

enum class TokenKind : std::uint8_t {
  kCls,
  kQuestionWord,
  kSep,
  kSpeakerName,
  kColon,
  kUtteranceWord,
  kSceneWord,
};

const char* token_kind_name(TokenKind k);

// Half-open [begin, end) over global token indices.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const TokenRange&) const = default;
};

// Flat joint sequence: [CLS] q.. [SEP] speaker : words.. [SEP] ... [SEP].
// Every utterance is followed by one separator, so the final separator is
// the last context token. question_range covers the question words only;
// context_range covers everything after the question separator.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<TokenKind> kinds;
  TokenRange question_range;
  TokenRange context_range;

  std::size_t size() const { return tokens.size(); }
};

// All ranges are global token indices into the joint sequence. Dropped
// utterances keep empty ranges and empty word lists.
struct AlignmentMap {
  std::vector<TokenRange> utterance_token_span;           // text words only
  std::vector<TokenRange> speaker_token_spans;            // empty for scene
  std::vector<std::vector<TokenRange>> word_token_spans;  // per utterance, per word
  std::vector<TokenRange> question_word_tokens;           // per question word
  std::vector<TokenRange> answer_token_spans;             // per gold answer
  std::vector<std::size_t> dropped_utterances;            // ascending
};

// Maps one word to its subtokens. The default keeps words whole, so every
// word is exactly one token.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> split(const std::string& word) const {
    return {word};
  }
};

enum class TruncationPolicy { kError, kDropTail };

struct BuildOptions {
  std::size_t max_tokens = 512;
  TruncationPolicy truncation = TruncationPolicy::kError;
  const Tokenizer* tokenizer = nullptr;  // null: whole-word tokens
};

struct BuiltSequence {
  TokenSequence seq;
  AlignmentMap map;
};

// Throws TruncationError under TruncationPolicy::kError when the sequence
// exceeds max_tokens, naming the utterances that do not fit. Under
// kDropTail whole utterances are dropped from the end instead; dropping
// every utterance is still an error.
BuiltSequence build_sequence(const corpus::Question& question,
                             const corpus::Dialogue& dialogue,
                             const BuildOptions& options = {});

// Global token range of a gold answer span. Throws UnmappableSpanError if
// the span's utterance was dropped or the span is out of range.
TokenRange locate_answer_tokens(const corpus::AnswerSpan& span,
                                const AlignmentMap& map);

}  // namespace quisg::text
