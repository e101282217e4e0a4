#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "quisg/corpus.hpp"
#include "quisg/encoder.hpp"
#include "quisg/params.hpp"
#include "quisg/textseq.hpp"

namespace quisg::keyex {

// A sliding window of m+1 consecutive utterances. token_interval is
// context-local: [token_begin, token_end) indexes rows of the context
// slice, covering the first member's first owned token through the last
// member's final text word.
struct Unit {
  std::size_t index = 0;
  std::vector<std::size_t> utterances;  // consecutive, ascending
  std::size_t token_begin = 0;
  std::size_t token_end = 0;
  bool label = false;
  double score = 0.0;
};

// Units for window parameter m: N - m windows for N > m, one window over
// everything otherwise. Requires an alignment without dropped utterances.
std::vector<Unit> form_units(const corpus::Dialogue& dialogue,
                             const text::TokenSequence& seq,
                             const text::AlignmentMap& map, std::size_t m);

// label = true iff a unit contains the utterance of any gold answer.
void label_units(std::vector<Unit>& units, const corpus::Question& question);

// Deduplicated union of the selected units' utterances in chronological
// order. provenance[i] lists the selected unit indices containing
// utterances[i].
struct KeySet {
  std::vector<std::size_t> utterances;
  std::vector<std::vector<std::size_t>> provenance;
  std::vector<std::size_t> selected_units;

  bool contains(std::size_t utterance) const;
};

// Sigmoid(Linear([maxpool(unit rows) || maxpool(question rows)])). Scores
// are independent: no normalization couples the units of one dialogue.
class UnitScorer {
 public:
  UnitScorer(nn::ParameterStore& store, std::size_t d_h,
             std::string prefix = "scorer");

  // (n_units x 1) tensor of scores in (0, 1).
  nn::Tensor score_units(nn::Tape& tape, const std::vector<Unit>& units,
                         const enc::EncoderOutput& enc) const;

 private:
  nn::ParameterStore& store_;
  std::size_t d_h_;
  std::string prefix_;
};

// Selects up to k units with score > 0.5, highest first; ties prefer the
// lower unit index. When nothing clears 0.5 the single best unit is taken
// so the key set is never empty.
KeySet extract_keys(const std::vector<Unit>& scored_units, std::size_t k);

}  // namespace quisg::keyex
