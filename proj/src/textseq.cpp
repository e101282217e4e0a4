#include "quisg/textseq.hpp"

#include <sstream>

namespace quisg::text {

namespace {

constexpr const char* kCls = "[CLS]";
constexpr const char* kSep = "[SEP]";

const Tokenizer& default_tokenizer() {
  static const Tokenizer t;
  return t;
}

std::vector<std::string> speaker_words(const std::string& full) {
  std::vector<std::string> out;
  std::istringstream ss(full);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

// Token count of one utterance block: speaker subtokens + ":" + word
// subtokens + trailing separator.
std::size_t utterance_cost(const corpus::Utterance& u, const Tokenizer& tok) {
  std::size_t n = 1;  // separator
  if (u.speaker) {
    for (const std::string& w : speaker_words(*u.speaker)) n += tok.split(w).size();
    n += 1;  // colon
  }
  for (const std::string& w : u.words) n += tok.split(w).size();
  return n;
}

}  // namespace

const char* token_kind_name(TokenKind k) {
  switch (k) {
    case TokenKind::kCls: return "CLS";
    case TokenKind::kQuestionWord: return "QUESTION_WORD";
    case TokenKind::kSep: return "SEP";
    case TokenKind::kSpeakerName: return "SPEAKER_NAME";
    case TokenKind::kColon: return "COLON";
    case TokenKind::kUtteranceWord: return "UTTERANCE_WORD";
    case TokenKind::kSceneWord: return "SCENE_WORD";
  }
  return "?";
}

BuiltSequence build_sequence(const corpus::Question& question,
                             const corpus::Dialogue& dialogue,
                             const BuildOptions& options) {
  corpus::validate_dialogue(dialogue);
  corpus::validate_question(question, dialogue);
  const Tokenizer& tok = options.tokenizer ? *options.tokenizer : default_tokenizer();

  // Fixed prefix: CLS + question subtokens + separator.
  std::size_t prefix = 2;
  std::vector<std::vector<std::string>> q_subs;
  for (const std::string& w : question.words) {
    q_subs.push_back(tok.split(w));
    if (q_subs.back().empty())
      throw ValidationError("tokenizer produced no tokens for question word '" + w + "'");
    prefix += q_subs.back().size();
  }

  const std::size_t n_utt = dialogue.utterances.size();
  std::vector<std::size_t> costs(n_utt);
  for (std::size_t u = 0; u < n_utt; ++u)
    costs[u] = utterance_cost(dialogue.utterances[u], tok);

  std::size_t keep = n_utt;
  std::size_t total = prefix;
  for (std::size_t u = 0; u < n_utt; ++u) total += costs[u];
  while (keep > 0 && total > options.max_tokens) {
    --keep;
    total -= costs[keep];
  }
  if (keep < n_utt) {
    std::string dropped;
    for (std::size_t u = keep; u < n_utt; ++u) {
      if (!dropped.empty()) dropped += ", ";
      dropped += std::to_string(u);
    }
    if (options.truncation == TruncationPolicy::kError)
      throw TruncationError("sequence for question '" + question.id + "' needs " +
                            std::to_string(prefix +
                                           [&] { std::size_t s = 0; for (auto c : costs) s += c; return s; }()) +
                            " tokens but max_tokens is " +
                            std::to_string(options.max_tokens) +
                            "; utterances " + dropped + " do not fit");
    if (keep == 0)
      throw TruncationError("question '" + question.id +
                            "' leaves no room for any utterance within max_tokens " +
                            std::to_string(options.max_tokens));
  }

  BuiltSequence out;
  TokenSequence& seq = out.seq;
  AlignmentMap& map = out.map;
  seq.tokens.reserve(total);
  seq.kinds.reserve(total);
  auto push = [&](std::string t, TokenKind k) {
    seq.tokens.push_back(std::move(t));
    seq.kinds.push_back(k);
  };

  push(kCls, TokenKind::kCls);
  seq.question_range.begin = seq.size();
  for (std::size_t w = 0; w < q_subs.size(); ++w) {
    TokenRange r{seq.size(), 0};
    for (const std::string& s : q_subs[w]) push(s, TokenKind::kQuestionWord);
    r.end = seq.size();
    map.question_word_tokens.push_back(r);
  }
  seq.question_range.end = seq.size();
  push(kSep, TokenKind::kSep);
  seq.context_range.begin = seq.size();

  map.utterance_token_span.assign(n_utt, TokenRange{});
  map.speaker_token_spans.assign(n_utt, TokenRange{});
  map.word_token_spans.assign(n_utt, {});
  for (std::size_t u = 0; u < keep; ++u) {
    const corpus::Utterance& utt = dialogue.utterances[u];
    if (utt.speaker) {
      TokenRange sp{seq.size(), 0};
      for (const std::string& w : speaker_words(*utt.speaker))
        for (const std::string& s : tok.split(w)) push(s, TokenKind::kSpeakerName);
      sp.end = seq.size();
      map.speaker_token_spans[u] = sp;
      push(":", TokenKind::kColon);
    }
    TokenKind word_kind = utt.is_scene ? TokenKind::kSceneWord : TokenKind::kUtteranceWord;
    TokenRange span{seq.size(), 0};
    for (const std::string& w : utt.words) {
      TokenRange wr{seq.size(), 0};
      const std::vector<std::string> subs = tok.split(w);
      if (subs.empty())
        throw ValidationError("tokenizer produced no tokens for word '" + w + "'");
      for (const std::string& s : subs) push(s, word_kind);
      wr.end = seq.size();
      map.word_token_spans[u].push_back(wr);
    }
    span.end = seq.size();
    map.utterance_token_span[u] = span;
    push(kSep, TokenKind::kSep);
  }
  seq.context_range.end = seq.size();
  for (std::size_t u = keep; u < n_utt; ++u) map.dropped_utterances.push_back(u);

  for (const corpus::AnswerSpan& a : question.answers) {
    if (a.utterance_index >= keep) {
      map.answer_token_spans.push_back(TokenRange{});
      continue;
    }
    map.answer_token_spans.push_back(locate_answer_tokens(a, map));
  }
  return out;
}

TokenRange locate_answer_tokens(const corpus::AnswerSpan& span,
                                const AlignmentMap& map) {
  if (span.utterance_index >= map.word_token_spans.size())
    throw UnmappableSpanError("answer utterance " + std::to_string(span.utterance_index) +
                              " is outside the dialogue");
  const std::vector<TokenRange>& words = map.word_token_spans[span.utterance_index];
  if (words.empty())
    throw UnmappableSpanError("answer utterance " + std::to_string(span.utterance_index) +
                              " was dropped by truncation");
  if (span.start_word > span.end_word || span.end_word >= words.size())
    throw UnmappableSpanError("answer word range [" + std::to_string(span.start_word) +
                              ", " + std::to_string(span.end_word) +
                              "] is outside utterance " +
                              std::to_string(span.utterance_index));
  return TokenRange{words[span.start_word].begin, words[span.end_word].end};
}

}  // namespace quisg::text
