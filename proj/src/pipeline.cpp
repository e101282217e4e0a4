#include "quisg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

namespace quisg::pipeline {

using json = nlohmann::json;
using nn::Tape;
using nn::Tensor;

namespace {

enc::ToyEncoderConfig encoder_config(const cfg::RunConfig& c) {
  enc::ToyEncoderConfig e;
  e.d_h = c.d_h;
  e.mixing_layers = c.mixing_layers;
  e.vocab = c.vocab;
  e.window_radius = c.window_radius;
  e.position_scale = c.position_scale;
  return e;
}

gat::GatConfig gat_config(const cfg::RunConfig& c) {
  gat::GatConfig g;
  g.layers = c.gat_layers;
  g.heads = c.heads;
  g.d_h = c.d_h;
  g.leaky_slope = c.leaky_slope;
  return g;
}

}  // namespace

std::vector<QuestionContext> prepare(const corpus::Corpus& corpus,
                                     const cfg::RunConfig& config,
                                     const corpus::NerHints* hints) {
  std::vector<QuestionContext> out;
  text::BuildOptions opts;
  opts.max_tokens = config.max_tokens;
  for (const corpus::DialogueRecord& rec : corpus) {
    for (const corpus::Question& q : rec.questions) {
      QuestionContext qc;
      qc.dialogue = &rec.dialogue;
      qc.question = &q;
      qc.built = text::build_sequence(q, rec.dialogue, opts);
      qc.units = keyex::form_units(rec.dialogue, qc.built.seq, qc.built.map, config.m);
      keyex::label_units(qc.units, q);
      const std::vector<std::string>* ner = nullptr;
      if (hints) {
        auto it = hints->find(q.id);
        if (it != hints->end()) ner = &it->second;
      }
      qc.mentions = corpus::resolve_question_speakers(q, rec.dialogue, ner);
      out.push_back(std::move(qc));
    }
  }
  return out;
}

ExtractorModel::ExtractorModel(nn::ParameterStore& store,
                               const cfg::RunConfig& config,
                               const std::string& prefix)
    : encoder(store, encoder_config(config), prefix + "enc"),
      scorer(store, config.d_h, prefix + "scorer") {}

QaModel::QaModel(nn::ParameterStore& store, const cfg::RunConfig& config,
                 const std::string& prefix)
    : encoder(store, encoder_config(config), prefix + "enc"),
      gat(store, gat_config(config), prefix + "gat"),
      heads(store, config.d_h, prefix + "heads") {}

namespace {

Tensor unit_labels(const std::vector<keyex::Unit>& units) {
  std::vector<double> y(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) y[i] = units[i].label ? 1.0 : 0.0;
  return Tensor::col_vector(std::move(y));
}

Tensor extractor_loss(Tape& tape, const ExtractorModel& model,
                      const QuestionContext& qc) {
  enc::EncoderOutput eo = model.encoder.encode(tape, qc.built.seq, qc.question->id);
  Tensor scores = model.scorer.score_units(tape, qc.units, eo);
  return tape.bce_sum(scores, unit_labels(qc.units));
}

// Context-local inclusive token interval of the first gold answer.
std::pair<std::size_t, std::size_t> gold_token_interval(const QuestionContext& qc) {
  if (qc.built.map.answer_token_spans.empty())
    throw PreconditionError("question '" + qc.question->id + "' has no gold answers");
  const text::TokenRange span = qc.built.map.answer_token_spans[0];
  if (span.empty())
    throw UnmappableSpanError("gold answer of question '" + qc.question->id +
                              "' lies in a truncated utterance");
  const std::size_t c0 = qc.built.seq.context_range.begin;
  return {span.begin - c0, span.end - 1 - c0};
}

// Full graph-augmented head pass for one question over fixed keys.
spanqa::SpanHeads::Output qa_forward(Tape& tape, const QaModel& model,
                                     const QuestionContext& qc,
                                     const keyex::KeySet& keys,
                                     const cfg::RunConfig& config) {
  enc::EncoderOutput eo = model.encoder.encode(tape, qc.built.seq, qc.question->id);
  graph::BuildInputs in{*qc.question, qc.mentions, keys, *qc.dialogue,
                        qc.built.seq, qc.built.map};
  graph::QuisgGraph g = graph::build_graph(in, config.k_w);
  Tensor inits = gat::node_init_matrix(tape, g, eo.h_qc);
  Tensor states = model.gat.forward(tape, g, inits);
  Tensor h_c = eo.context_states(tape);
  spanqa::UpdatedContext updated =
      spanqa::write_back(tape, h_c, g, states, qc.built.seq.context_range.begin);
  return model.heads.forward(tape, updated.h_c, eo.cls_state(tape));
}

Tensor qa_question_loss(Tape& tape, const QaModel& model, const QuestionContext& qc,
                        const keyex::KeySet& keys, const cfg::RunConfig& config) {
  spanqa::SpanHeads::Output out = qa_forward(tape, model, qc, keys, config);
  spanqa::QaTarget target;
  target.answerable = qc.question->answerable;
  target.na_label_one_means_unanswerable = config.na_label_one_means_unanswerable;
  if (qc.question->answerable) target.gold = gold_token_interval(qc);
  return spanqa::qa_loss(tape, out, target);
}

// Runs `steps` minibatch Adam steps, cycling through the questions in
// order. loss_of builds one question's loss on the given tape.
template <typename LossOf>
TrainResult run_training(nn::ParameterStore& store,
                         const std::vector<QuestionContext>& questions,
                         const cfg::RunConfig& config, std::size_t steps,
                         LossOf&& loss_of) {
  if (questions.empty()) throw PreconditionError("no questions to train on");
  TrainResult result;
  const std::size_t batch = std::min(config.batch_size, questions.size());
  const std::size_t steps_per_epoch =
      (questions.size() + batch - 1) / batch;
  std::size_t cursor = 0;
  double epoch_sum = 0.0;
  std::size_t epoch_steps = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const QuestionContext& qc = questions[cursor];
      cursor = (cursor + 1) % questions.size();
      Tape tape;
      Tensor loss = loss_of(tape, qc);
      Tensor scaled = tape.scale(loss, 1.0 / static_cast<double>(batch));
      batch_loss += scaled.value();
      tape.backward(scaled);
    }
    store.adam_step(config.lr);
    result.step_losses.push_back(batch_loss);
    epoch_sum += batch_loss;
    ++epoch_steps;
    if (epoch_steps == steps_per_epoch || step + 1 == steps) {
      result.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_steps));
      epoch_sum = 0.0;
      epoch_steps = 0;
    }
  }
  return result;
}

}  // namespace

TrainResult train_extractor(nn::ParameterStore& store,
                            const std::vector<QuestionContext>& questions,
                            const cfg::RunConfig& config) {
  ExtractorModel model(store, config);
  return run_training(store, questions, config, config.extractor_steps,
                      [&](Tape& tape, const QuestionContext& qc) {
                        return extractor_loss(tape, model, qc);
                      });
}

KeySets extract_all(nn::ParameterStore& store,
                    const std::vector<QuestionContext>& questions,
                    const cfg::RunConfig& config) {
  ExtractorModel model(store, config);
  KeySets out;
  for (const QuestionContext& qc : questions) {
    Tape tape(/*recording=*/false);
    enc::EncoderOutput eo = model.encoder.encode(tape, qc.built.seq, qc.question->id);
    Tensor scores = model.scorer.score_units(tape, qc.units, eo);
    std::vector<keyex::Unit> scored = qc.units;
    for (std::size_t i = 0; i < scored.size(); ++i)
      scored[i].score = scores.at(i, 0);
    KeyRecord rec;
    rec.keys = keyex::extract_keys(scored, config.k);
    rec.unit_scores.assign(scores.values().begin(), scores.values().end());
    out.emplace(qc.question->id, std::move(rec));
  }
  return out;
}

void save_keysets(const std::filesystem::path& path, const KeySets& keysets) {
  json root = json::object();
  for (const auto& [qid, rec] : keysets)
    root[qid] = {{"utterances", rec.keys.utterances},
                 {"scores", rec.unit_scores}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write key sets to " + path.string());
  out << root.dump(2) << "\n";
}

KeySets load_keysets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open key sets file: " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  KeySets out;
  for (const auto& [qid, jrec] : root.items()) {
    KeyRecord rec;
    rec.keys.utterances = jrec.at("utterances").get<std::vector<std::size_t>>();
    if (!std::is_sorted(rec.keys.utterances.begin(), rec.keys.utterances.end()))
      throw ValidationError("key set for '" + qid + "' is not chronological");
    if (jrec.contains("scores"))
      rec.unit_scores = jrec.at("scores").get<std::vector<double>>();
    out.emplace(qid, std::move(rec));
  }
  return out;
}

TrainResult train_qa(nn::ParameterStore& store,
                     const std::vector<QuestionContext>& questions,
                     const KeySets& keysets, const cfg::RunConfig& config) {
  QaModel model(store, config);
  return run_training(store, questions, config, config.qa_steps,
                      [&](Tape& tape, const QuestionContext& qc) {
                        auto it = keysets.find(qc.question->id);
                        if (it == keysets.end())
                          throw LookupError("no key set for question '" +
                                            qc.question->id + "'");
                        return qa_question_loss(tape, model, qc, it->second.keys,
                                                config);
                      });
}

namespace {

// Word-level span for a context-local token prediction.
corpus::AnswerSpan to_word_span(const spanqa::SpanPrediction& pred,
                                const QuestionContext& qc) {
  const std::size_t c0 = qc.built.seq.context_range.begin;
  const std::size_t g_start = c0 + pred.start;
  const std::size_t g_end = c0 + pred.end;
  const std::vector<text::TokenRange>& words =
      qc.built.map.word_token_spans[pred.utterance];
  corpus::AnswerSpan span;
  span.utterance_index = pred.utterance;
  bool found_start = false, found_end = false;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].contains(g_start)) {
      span.start_word = w;
      found_start = true;
    }
    if (words[w].contains(g_end)) {
      span.end_word = w;
      found_end = true;
    }
  }
  if (!found_start || !found_end)
    throw UnmappableSpanError("predicted tokens do not map back to words");
  const std::vector<std::string>& utt_words =
      qc.dialogue->utterances[pred.utterance].words;
  for (std::size_t w = span.start_word; w <= span.end_word; ++w) {
    if (w > span.start_word) span.text += ' ';
    span.text += utt_words[w];
  }
  return span;
}

Prediction predict_one(const QaModel& model, const QuestionContext& qc,
                       const keyex::KeySet& keys, const cfg::RunConfig& config) {
  Tape tape(/*recording=*/false);
  spanqa::SpanHeads::Output out = qa_forward(tape, model, qc, keys, config);
  Prediction pred;
  const double p_one = out.p_na.value();
  const double p_no_answer =
      config.na_label_one_means_unanswerable ? p_one : 1.0 - p_one;
  if (config.enable_no_answer && p_no_answer > config.na_threshold) {
    pred.score = std::log(p_no_answer);
    return pred;
  }
  spanqa::DecodeLayout layout =
      spanqa::make_decode_layout(qc.built.seq, qc.built.map, keys);
  spanqa::DecodeOptions opts;
  opts.scale_f = config.f;
  opts.beam = config.beam;
  opts.max_span_tokens = config.max_answer_tokens;
  spanqa::DecodeResult dec = spanqa::decode(out.start_logits.values(),
                                            out.end_logits.values(), layout, opts);
  pred.span = to_word_span(dec.best, qc);
  pred.answer = pred.span->text;
  pred.score = dec.best.score;
  for (const spanqa::SpanPrediction& alt : dec.n_best)
    pred.n_best.push_back({to_word_span(alt, qc), alt.score});
  return pred;
}

}  // namespace

Predictions predict_all(nn::ParameterStore& store,
                        const std::vector<QuestionContext>& questions,
                        const KeySets& keysets, const cfg::RunConfig& config) {
  QaModel model(store, config);
  // Pre-resolve key sets so lookup errors surface deterministically.
  std::vector<const keyex::KeySet*> keys(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    auto it = keysets.find(questions[i].question->id);
    if (it == keysets.end())
      throw LookupError("no key set for question '" + questions[i].question->id + "'");
    keys[i] = &it->second.keys;
  }
  std::vector<Prediction> results(questions.size());
  std::vector<std::string> errors(questions.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(questions.size()); ++i) {
    try {
      results[i] = predict_one(model, questions[i], *keys[i], config);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < questions.size(); ++i)
    if (!errors[i].empty())
      throw Error("prediction for question '" + questions[i].question->id +
                  "' failed: " + errors[i]);
  Predictions out;
  for (std::size_t i = 0; i < questions.size(); ++i)
    out.emplace(questions[i].question->id, std::move(results[i]));
  return out;
}

namespace {

json span_to_json(const corpus::AnswerSpan& span) {
  return {{"utterance", span.utterance_index},
          {"start_word", span.start_word},
          {"end_word", span.end_word},
          {"text", span.text}};
}

corpus::AnswerSpan span_from_json(const json& j) {
  corpus::AnswerSpan span;
  span.utterance_index = j.at("utterance").get<std::size_t>();
  span.start_word = j.at("start_word").get<std::size_t>();
  span.end_word = j.at("end_word").get<std::size_t>();
  span.text = j.at("text").get<std::string>();
  return span;
}

}  // namespace

void save_predictions(const std::filesystem::path& path, const Predictions& preds) {
  json root = json::object();
  for (const auto& [qid, pred] : preds) {
    json jp;
    jp["answer"] = pred.answer ? json(*pred.answer) : json(nullptr);
    jp["span"] = pred.span ? span_to_json(*pred.span) : json(nullptr);
    jp["score"] = pred.score;
    json nbest = json::array();
    for (const Alternative& alt : pred.n_best)
      nbest.push_back({{"span", span_to_json(alt.span)}, {"score", alt.score}});
    jp["n_best"] = std::move(nbest);
    root[qid] = std::move(jp);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write predictions to " + path.string());
  out << root.dump(2) << "\n";
}

Predictions load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open predictions file: " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  Predictions out;
  for (const auto& [qid, jp] : root.items()) {
    Prediction pred;
    if (!jp.at("answer").is_null()) pred.answer = jp.at("answer").get<std::string>();
    if (!jp.at("span").is_null()) pred.span = span_from_json(jp.at("span"));
    pred.score = jp.at("score").get<double>();
    for (const json& ja : jp.at("n_best"))
      pred.n_best.push_back({span_from_json(ja.at("span")), ja.at("score").get<double>()});
    out.emplace(qid, std::move(pred));
  }
  return out;
}

metrics::Predictions answer_map(const Predictions& preds) {
  metrics::Predictions out;
  for (const auto& [qid, pred] : preds) out.emplace(qid, pred.answer);
  return out;
}

Coverage coverage_recall(const KeySets& keysets,
                         const std::vector<QuestionContext>& questions) {
  Coverage cov;
  double size_sum = 0.0;
  std::size_t with_keys = 0;
  for (const QuestionContext& qc : questions) {
    auto it = keysets.find(qc.question->id);
    if (it == keysets.end()) continue;
    ++with_keys;
    size_sum += static_cast<double>(it->second.keys.utterances.size());
    if (!qc.question->answerable) continue;
    ++cov.answerable;
    bool hit = false;
    for (const corpus::AnswerSpan& a : qc.question->answers)
      hit = hit || it->second.keys.contains(a.utterance_index);
    if (hit) ++cov.covered;
  }
  if (cov.answerable > 0)
    cov.recall = static_cast<double>(cov.covered) / static_cast<double>(cov.answerable);
  if (with_keys > 0) cov.mean_keyset_size = size_sum / static_cast<double>(with_keys);
  return cov;
}

nn::Tensor composed_loss(Tape& tape, nn::ParameterStore& store,
                         const QuestionContext& qc, const cfg::RunConfig& config) {
  ExtractorModel ex(store, config, "ex.");
  QaModel qa(store, config, "qa.");

  enc::EncoderOutput ex_eo = ex.encoder.encode(tape, qc.built.seq, qc.question->id);
  Tensor scores = ex.scorer.score_units(tape, qc.units, ex_eo);
  Tensor j_k = tape.bce_sum(scores, unit_labels(qc.units));

  std::vector<keyex::Unit> scored = qc.units;
  for (std::size_t i = 0; i < scored.size(); ++i) scored[i].score = scores.at(i, 0);
  keyex::KeySet keys = keyex::extract_keys(scored, config.k);

  Tensor j_qa = qa_question_loss(tape, qa, qc, keys, config);
  return tape.add(j_k, j_qa);
}

}  // namespace quisg::pipeline
