#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quisg/config.hpp"
#include "quisg/corpus.hpp"
#include "quisg/encoder.hpp"
#include "quisg/gat.hpp"
#include "quisg/graph.hpp"
#include "quisg/key_extractor.hpp"
#include "quisg/metrics.hpp"
#include "quisg/params.hpp"
#include "quisg/span_qa.hpp"
#include "quisg/textseq.hpp"

namespace quisg::pipeline {

// Everything derived once per question: token sequence, alignment, sliding
// units with labels, and resolved speaker mentions.
struct QuestionContext {
  const corpus::Dialogue* dialogue = nullptr;
  const corpus::Question* question = nullptr;
  text::BuiltSequence built;
  std::vector<keyex::Unit> units;
  std::vector<corpus::SpeakerMention> mentions;
};

// Contexts in corpus order (dialogues, then their questions). The corpus
// must outlive the returned contexts.
std::vector<QuestionContext> prepare(const corpus::Corpus& corpus,
                                     const cfg::RunConfig& config,
                                     const corpus::NerHints* hints = nullptr);

// Encoder + unit scorer trained to classify answer-bearing units.
struct ExtractorModel {
  enc::ToyEncoder encoder;
  keyex::UnitScorer scorer;

  ExtractorModel(nn::ParameterStore& store, const cfg::RunConfig& config,
                 const std::string& prefix = "");
};

// Encoder + graph attention + span heads.
struct QaModel {
  enc::ToyEncoder encoder;
  gat::Gat gat;
  spanqa::SpanHeads heads;

  QaModel(nn::ParameterStore& store, const cfg::RunConfig& config,
          const std::string& prefix = "");
};

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean step loss per pass over the data
};

// Minibatch training in corpus order for config.extractor_steps /
// config.qa_steps Adam steps. Both throw on an empty question list.
TrainResult train_extractor(nn::ParameterStore& store,
                            const std::vector<QuestionContext>& questions,
                            const cfg::RunConfig& config);

struct KeyRecord {
  keyex::KeySet keys;
  std::vector<double> unit_scores;
};
using KeySets = std::map<std::string, KeyRecord>;

KeySets extract_all(nn::ParameterStore& store,
                    const std::vector<QuestionContext>& questions,
                    const cfg::RunConfig& config);

void save_keysets(const std::filesystem::path& path, const KeySets& keysets);
KeySets load_keysets(const std::filesystem::path& path);

TrainResult train_qa(nn::ParameterStore& store,
                     const std::vector<QuestionContext>& questions,
                     const KeySets& keysets, const cfg::RunConfig& config);

struct Alternative {
  corpus::AnswerSpan span;
  double score = 0.0;
};

struct Prediction {
  std::optional<std::string> answer;
  std::optional<corpus::AnswerSpan> span;
  double score = 0.0;
  std::vector<Alternative> n_best;
};
using Predictions = std::map<std::string, Prediction>;

// Read-only on parameters; questions are evaluated in parallel.
Predictions predict_all(nn::ParameterStore& store,
                        const std::vector<QuestionContext>& questions,
                        const KeySets& keysets, const cfg::RunConfig& config);

void save_predictions(const std::filesystem::path& path, const Predictions& preds);
Predictions load_predictions(const std::filesystem::path& path);
metrics::Predictions answer_map(const Predictions& preds);

struct Coverage {
  double recall = 0.0;
  double mean_keyset_size = 0.0;
  std::size_t answerable = 0;
  std::size_t covered = 0;
};

// Fraction of answerable questions whose gold-answer utterances intersect
// their key set.
Coverage coverage_recall(const KeySets& keysets,
                         const std::vector<QuestionContext>& questions);

// Single-question training loss through every stage (extractor loss plus
// span loss over keys extracted from the current scores), with extractor
// parameters under "ex." and span parameters under "qa.". Deterministic
// per parameter setting; used for gradient checking.
nn::Tensor composed_loss(nn::Tape& tape, nn::ParameterStore& store,
                         const QuestionContext& qc, const cfg::RunConfig& config);

}  // namespace quisg::pipeline
