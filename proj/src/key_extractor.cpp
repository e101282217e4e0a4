#include "quisg/key_extractor.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace quisg::keyex {

using nn::Tape;
using nn::Tensor;

std::vector<Unit> form_units(const corpus::Dialogue& dialogue,
                             const text::TokenSequence& seq,
                             const text::AlignmentMap& map, std::size_t m) {
  if (!map.dropped_utterances.empty())
    throw PreconditionError("cannot form units over a truncated dialogue");
  const std::size_t n = dialogue.utterances.size();
  if (n == 0) throw PreconditionError("cannot form units without utterances");
  const std::size_t c0 = seq.context_range.begin;

  // First token owned by each utterance: its speaker name when present,
  // otherwise its first word.
  auto first_token = [&](std::size_t u) {
    const text::TokenRange& sp = map.speaker_token_spans[u];
    return sp.empty() ? map.utterance_token_span[u].begin : sp.begin;
  };

  std::vector<Unit> units;
  const std::size_t span = std::min(m + 1, n);
  const std::size_t count = n - span + 1;
  units.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Unit unit;
    unit.index = s;
    for (std::size_t u = s; u < s + span; ++u) unit.utterances.push_back(u);
    unit.token_begin = first_token(s) - c0;
    unit.token_end = map.utterance_token_span[s + span - 1].end - c0;
    units.push_back(std::move(unit));
  }
  return units;
}

void label_units(std::vector<Unit>& units, const corpus::Question& question) {
  for (Unit& unit : units) {
    unit.label = false;
    for (const corpus::AnswerSpan& a : question.answers) {
      if (std::binary_search(unit.utterances.begin(), unit.utterances.end(),
                             a.utterance_index)) {
        unit.label = true;
        break;
      }
    }
  }
}

bool KeySet::contains(std::size_t utterance) const {
  return std::binary_search(utterances.begin(), utterances.end(), utterance);
}

UnitScorer::UnitScorer(nn::ParameterStore& store, std::size_t d_h,
                       std::string prefix)
    : store_(store), d_h_(d_h), prefix_(std::move(prefix)) {
  store_.get_or_create(prefix_ + ".W", nn::Shape{2 * d_h_, 1},
                       nn::Init::kUniformFanIn);
  store_.get_or_create(prefix_ + ".b", nn::Shape{1, 1}, nn::Init::kZeros);
}

nn::Tensor UnitScorer::score_units(Tape& tape, const std::vector<Unit>& units,
                                   const enc::EncoderOutput& enc) const {
  if (units.empty()) throw PreconditionError("no units to score");
  if (enc.h_qc.cols() != d_h_)
    throw DimensionError("scorer width " + std::to_string(d_h_) +
                         " does not match encoder width " +
                         std::to_string(enc.h_qc.cols()));
  Tensor h_c = enc.context_states(tape);
  Tensor h_q = enc.question_states(tape);
  Tensor q_pool = tape.maxpool_rows(h_q, 0, h_q.rows());
  Tensor w = store_.get(prefix_ + ".W");
  Tensor b = store_.get(prefix_ + ".b");

  std::vector<Tensor> logits;
  logits.reserve(units.size());
  for (const Unit& unit : units) {
    if (unit.token_end > h_c.rows() || unit.token_begin >= unit.token_end)
      throw DimensionError("unit token interval [" + std::to_string(unit.token_begin) +
                           ", " + std::to_string(unit.token_end) +
                           ") is outside the context of " +
                           std::to_string(h_c.rows()) + " rows");
    Tensor u_pool = tape.maxpool_rows(h_c, unit.token_begin, unit.token_end);
    std::array<Tensor, 2> parts{u_pool, q_pool};
    Tensor cat = tape.concat_cols(parts);
    logits.push_back(tape.add(tape.matmul(cat, w), b));
  }
  return tape.sigmoid(tape.concat_rows(logits));
}

KeySet extract_keys(const std::vector<Unit>& scored_units, std::size_t k) {
  if (scored_units.empty())
    throw PreconditionError("cannot extract keys from zero units");
  if (k == 0) throw PreconditionError("k must be positive");

  std::vector<std::size_t> order(scored_units.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scored_units[a].score != scored_units[b].score)
      return scored_units[a].score > scored_units[b].score;
    return a < b;
  });

  KeySet keys;
  for (std::size_t i = 0; i < order.size() && keys.selected_units.size() < k; ++i) {
    if (scored_units[order[i]].score > 0.5)
      keys.selected_units.push_back(order[i]);
  }
  if (keys.selected_units.empty()) keys.selected_units.push_back(order[0]);

  std::vector<std::size_t> members;
  for (std::size_t unit_idx : keys.selected_units)
    for (std::size_t u : scored_units[unit_idx].utterances)
      members.push_back(u);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());

  keys.utterances = std::move(members);
  keys.provenance.resize(keys.utterances.size());
  for (std::size_t i = 0; i < keys.utterances.size(); ++i)
    for (std::size_t unit_idx : keys.selected_units)
      if (std::binary_search(scored_units[unit_idx].utterances.begin(),
                             scored_units[unit_idx].utterances.end(),
                             keys.utterances[i]))
        keys.provenance[i].push_back(unit_idx);
  return keys;
}

}  // namespace quisg::keyex
