#include "quisg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace quisg::metrics {

std::string normalize_answer(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    lowered += static_cast<char>(std::tolower(u));
  }
  std::istringstream ss(lowered);
  std::string w, out;
  while (ss >> w) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> normalized_tokens(const std::string& text) {
  std::istringstream ss(normalize_answer(text));
  std::vector<std::string> tokens;
  std::string w;
  while (ss >> w) tokens.push_back(w);
  return tokens;
}

double token_f1(const std::string& prediction, const std::string& gold) {
  const std::vector<std::string> p = normalized_tokens(prediction);
  const std::vector<std::string> g = normalized_tokens(gold);
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
  std::multiset<std::string> bag(g.begin(), g.end());
  std::size_t common = 0;
  for (const std::string& w : p) {
    auto it = bag.find(w);
    if (it != bag.end()) {
      bag.erase(it);
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

bool exact_match(const std::string& prediction, const std::string& gold) {
  return normalize_answer(prediction) == normalize_answer(gold);
}

QuestionScore score_question(const std::optional<std::string>& prediction,
                             const corpus::Question& question) {
  QuestionScore score;
  if (!prediction) {
    score.em = question.answerable ? 0.0 : 1.0;
    score.f1 = score.em;
    return score;
  }
  if (!question.answerable) return score;  // spurious answer: 0/0
  for (const corpus::AnswerSpan& gold : question.answers) {
    score.em = std::max(score.em, exact_match(*prediction, gold.text) ? 1.0 : 0.0);
    score.f1 = std::max(score.f1, token_f1(*prediction, gold.text));
  }
  return score;
}

EvalReport score(const Predictions& predictions, const corpus::Corpus& gold,
                 const MentionIndex* mentions) {
  std::set<std::string> gold_ids;
  for (const corpus::DialogueRecord& rec : gold)
    for (const corpus::Question& q : rec.questions) gold_ids.insert(q.id);
  for (const auto& [qid, _] : predictions)
    if (!gold_ids.count(qid))
      throw ValidationError("prediction for unknown question id '" + qid + "'");

  EvalReport report;
  double em_sum = 0.0, f1_sum = 0.0;
  for (const corpus::DialogueRecord& rec : gold) {
    for (const corpus::Question& q : rec.questions) {
      auto it = predictions.find(q.id);
      if (it == predictions.end())
        throw ValidationError("no prediction for question id '" + q.id + "'");
      const QuestionScore s = score_question(it->second, q);
      em_sum += s.em;
      f1_sum += s.f1;
      ++report.n_questions;
      if (mentions) {
        auto mit = mentions->find(q.id);
        std::set<std::string> speakers;
        if (mit != mentions->end())
          for (const corpus::SpeakerMention& m : mit->second)
            speakers.insert(m.resolved_speaker);
        if (speakers.empty()) {
          report.without_speaker.f1_sum += s.f1;
          report.without_speaker.count += 1;
        } else {
          report.with_speaker.f1_sum += s.f1;
          report.with_speaker.count += 1;
          for (const std::string& sp : speakers) {
            report.per_speaker[sp].f1_sum += s.f1;
            report.per_speaker[sp].count += 1;
          }
        }
      }
    }
  }
  if (report.n_questions > 0) {
    report.em = 100.0 * em_sum / static_cast<double>(report.n_questions);
    report.f1 = 100.0 * f1_sum / static_cast<double>(report.n_questions);
  }
  return report;
}

}  // namespace quisg::metrics
