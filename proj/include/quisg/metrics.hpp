#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quisg/corpus.hpp"

namespace quisg::metrics {

// Lowercase, strip punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(const std::string& text);
std::vector<std::string> normalized_tokens(const std::string& text);

// Token-overlap F1 between two answer strings in [0, 1].
double token_f1(const std::string& prediction, const std::string& gold);
bool exact_match(const std::string& prediction, const std::string& gold);

struct QuestionScore {
  double em = 0.0;  // 0 or 1
  double f1 = 0.0;  // [0, 1]
};

// A null prediction is correct exactly when the question is unanswerable.
// Against multiple golds the best score counts.
QuestionScore score_question(const std::optional<std::string>& prediction,
                             const corpus::Question& question);

struct GroupScore {
  double f1_sum = 0.0;
  std::size_t count = 0;
  double f1() const { return count ? 100.0 * f1_sum / static_cast<double>(count) : 0.0; }
};

struct EvalReport {
  double em = 0.0;  // percentages
  double f1 = 0.0;
  std::size_t n_questions = 0;
  std::map<std::string, GroupScore> per_speaker;
  GroupScore with_speaker;
  GroupScore without_speaker;
  std::optional<double> coverage_recall;
  std::optional<double> mean_keyset_size;
};

using Predictions = std::map<std::string, std::optional<std::string>>;
using MentionIndex = std::map<std::string, std::vector<corpus::SpeakerMention>>;

// Macro-averaged EM/F1 over every gold question, with the per-speaker
// breakdown when mentions are given. Throws ValidationError on a
// prediction for an unknown id or a gold question without a prediction.
EvalReport score(const Predictions& predictions, const corpus::Corpus& gold,
                 const MentionIndex* mentions = nullptr);

}  // namespace quisg::metrics
