#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "quisg/config.hpp"
#include "quisg/corpus.hpp"
#include "quisg/errors.hpp"
#include "quisg/graph.hpp"
#include "quisg/metrics.hpp"
#include "quisg/params.hpp"
#include "quisg/pipeline.hpp"

namespace {

using namespace quisg;
using json = nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string format = "canonical";
  bool seed_given = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "flat key = value config file");
  cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
  cmd->add_option("--format", args.format, "corpus format: canonical|friendsqa|molweni");
  cmd->add_option("--seed", args.seed, "RNG seed override")
      ->each([&args](const std::string&) { args.seed_given = true; });
}

cfg::RunConfig resolve_config(const CommonArgs& args) {
  cfg::RunConfig config;
  if (!args.config_path.empty()) config = cfg::load_config(args.config_path);
  for (const std::string& kv : args.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) config.seed = args.seed;
  config.validate();
  std::cerr << "resolved config:\n" << config.to_string();
  return config;
}

corpus::Corpus load_corpus(const std::string& path, const std::string& format) {
  return corpus::ingest_corpus(path, corpus::parse_corpus_format(format));
}

void report_losses(const pipeline::TrainResult& result) {
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
    std::cerr << "epoch " << (e + 1) << " mean loss " << result.epoch_losses[e] << "\n";
}

int cmd_train_extractor(const CommonArgs& common, const std::string& corpus_path,
                        const std::string& checkpoint_out) {
  cfg::RunConfig config = resolve_config(common);
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
  nn::ParameterStore store(config.seed);
  pipeline::TrainResult result = pipeline::train_extractor(store, questions, config);
  report_losses(result);
  store.save(checkpoint_out);
  std::cerr << "saved extractor checkpoint to " << checkpoint_out << "\n";
  return 0;
}

int cmd_extract_keys(const CommonArgs& common, const std::string& corpus_path,
                     const std::string& checkpoint_in, const std::string& keysets_out) {
  cfg::RunConfig config = resolve_config(common);
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
  nn::ParameterStore store(config.seed);
  store.load(checkpoint_in);
  pipeline::KeySets keysets = pipeline::extract_all(store, questions, config);
  pipeline::save_keysets(keysets_out, keysets);
  pipeline::Coverage cov = pipeline::coverage_recall(keysets, questions);
  std::cerr << "wrote " << keysets.size() << " key sets to " << keysets_out
            << " (coverage recall " << cov.recall << ", mean size "
            << cov.mean_keyset_size << ")\n";
  return 0;
}

int cmd_train_qa(const CommonArgs& common, const std::string& corpus_path,
                 const std::string& keysets_path, const std::string& checkpoint_out) {
  cfg::RunConfig config = resolve_config(common);
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
  pipeline::KeySets keysets = pipeline::load_keysets(keysets_path);
  nn::ParameterStore store(config.seed);
  pipeline::TrainResult result = pipeline::train_qa(store, questions, keysets, config);
  report_losses(result);
  store.save(checkpoint_out);
  std::cerr << "saved span model checkpoint to " << checkpoint_out << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& corpus_path,
                const std::string& keysets_path, const std::string& checkpoint_in,
                const std::string& predictions_out) {
  cfg::RunConfig config = resolve_config(common);
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
  pipeline::KeySets keysets = pipeline::load_keysets(keysets_path);
  nn::ParameterStore store(config.seed);
  store.load(checkpoint_in);
  pipeline::Predictions preds = pipeline::predict_all(store, questions, keysets, config);
  pipeline::save_predictions(predictions_out, preds);
  std::cerr << "wrote " << preds.size() << " predictions to " << predictions_out << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& corpus_path,
                 const std::string& predictions_path, const std::string& keysets_path,
                 const std::string& report_out) {
  cfg::RunConfig config = resolve_config(common);
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  pipeline::Predictions preds = pipeline::load_predictions(predictions_path);

  metrics::MentionIndex mentions;
  for (const corpus::DialogueRecord& rec : corpus)
    for (const corpus::Question& q : rec.questions)
      mentions[q.id] = corpus::resolve_question_speakers(q, rec.dialogue);
  metrics::EvalReport report =
      metrics::score(pipeline::answer_map(preds), corpus, &mentions);

  if (!keysets_path.empty()) {
    std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
    pipeline::KeySets keysets = pipeline::load_keysets(keysets_path);
    pipeline::Coverage cov = pipeline::coverage_recall(keysets, questions);
    report.coverage_recall = cov.recall;
    report.mean_keyset_size = cov.mean_keyset_size;
  }

  json jr;
  jr["em"] = report.em;
  jr["f1"] = report.f1;
  jr["n_questions"] = report.n_questions;
  jr["with_speaker"] = {{"f1", report.with_speaker.f1()},
                        {"count", report.with_speaker.count}};
  jr["without_speaker"] = {{"f1", report.without_speaker.f1()},
                           {"count", report.without_speaker.count}};
  json per = json::object();
  for (const auto& [name, group] : report.per_speaker)
    per[name] = {{"f1", group.f1()}, {"count", group.count}};
  jr["per_speaker"] = std::move(per);
  if (report.coverage_recall) jr["coverage_recall"] = *report.coverage_recall;
  if (report.mean_keyset_size) jr["mean_keyset_size"] = *report.mean_keyset_size;

  const std::string text = jr.dump(2) + "\n";
  if (report_out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(report_out, std::ios::binary);
    if (!out) throw ParseError("cannot write report to " + report_out);
    out << text;
    std::cerr << "wrote report to " << report_out << "\n";
  }
  std::cout << "EM " << report.em << " F1 " << report.f1 << " over "
            << report.n_questions << " questions\n";
  return 0;
}

int cmd_inspect_graph(const CommonArgs& common, const std::string& corpus_path,
                      const std::string& keysets_path, const std::string& question_id,
                      const std::string& dot_out, const std::string& json_out) {
  cfg::RunConfig config = resolve_config(common);
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
  const pipeline::QuestionContext* qc = nullptr;
  for (const pipeline::QuestionContext& cand : questions)
    if (cand.question->id == question_id) qc = &cand;
  if (!qc) throw LookupError("question id '" + question_id + "' not in corpus");

  keyex::KeySet keys;
  if (!keysets_path.empty()) {
    pipeline::KeySets keysets = pipeline::load_keysets(keysets_path);
    auto it = keysets.find(question_id);
    if (it == keysets.end())
      throw LookupError("no key set for question '" + question_id + "'");
    keys = it->second.keys;
  } else {
    for (std::size_t u = 0; u < qc->dialogue->utterances.size(); ++u)
      keys.utterances.push_back(u);
  }

  graph::BuildInputs in{*qc->question, qc->mentions, keys, *qc->dialogue,
                        qc->built.seq, qc->built.map};
  graph::QuisgGraph g = graph::build_graph(in, config.k_w);
  std::cerr << "graph for '" << question_id << "': " << g.n() << " nodes, "
            << g.edge_rules.size() << " edges\n";
  if (!dot_out.empty()) {
    std::ofstream out(dot_out, std::ios::binary);
    if (!out) throw ParseError("cannot write DOT to " + dot_out);
    out << graph::export_dot(g);
  }
  if (!json_out.empty()) {
    std::ofstream out(json_out, std::ios::binary);
    if (!out) throw ParseError("cannot write graph JSON to " + json_out);
    out << graph::export_json(g).dump(2) << "\n";
  }
  if (dot_out.empty() && json_out.empty()) std::cout << graph::export_dot(g);
  return 0;
}

int cmd_gradcheck(const CommonArgs& common, const std::string& corpus_path,
                  std::size_t instances) {
  cfg::RunConfig config = resolve_config(common);
  // Gradient checking shrinks the model so central differences over every
  // parameter stay fast; structural settings (m, k, k_w) are kept.
  config.d_h = 8;
  config.vocab = 64;
  config.mixing_layers = 2;
  config.heads = 2;
  config.gat_layers = 2;
  corpus::Corpus corpus = load_corpus(corpus_path, common.format);
  std::vector<pipeline::QuestionContext> questions = pipeline::prepare(corpus, config);
  if (questions.empty()) throw ValidationError("corpus holds no questions");
  if (instances == 0) instances = 2;
  instances = std::min(instances, questions.size());

  bool all_ok = true;
  for (std::size_t i = 0; i < instances; ++i) {
    const pipeline::QuestionContext& qc = questions[i];
    nn::ParameterStore store(config.seed + i);
    nn::GradCheckReport report = nn::finite_diff_check(
        [&](nn::Tape& tape, nn::ParameterStore& s) {
          return pipeline::composed_loss(tape, s, qc, config);
        },
        store, 1e-5, 1e-4);
    std::cout << "question '" << qc.question->id << "': checked " << report.checked
              << " parameter entries, " << report.failures.size() << " failures"
              << (report.ok() ? " [pass]" : " [FAIL]") << "\n";
    for (std::size_t f = 0; f < std::min<std::size_t>(report.failures.size(), 10); ++f) {
      const nn::GradCheckFailure& fail = report.failures[f];
      std::cout << "  " << fail.name << "[" << fail.index << "] analytic "
                << fail.analytic << " numeric " << fail.numeric << " rel "
                << fail.rel_error << "\n";
    }
    all_ok = all_ok && report.ok();
  }
  std::cout << (all_ok ? "gradient check passed" : "gradient check FAILED") << "\n";
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialogue span QA over question-scope graphs"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string corpus_path, checkpoint_in, checkpoint_out, keysets_path;
  std::string predictions_path, report_out, question_id, dot_out, json_out;
  std::size_t instances = 2;

  CLI::App* train_ex = app.add_subcommand("train-extractor",
                                          "train the key-utterance extractor");
  add_common(train_ex, common);
  train_ex->add_option("--corpus", corpus_path, "corpus JSON")->required();
  train_ex->add_option("--checkpoint-out", checkpoint_out, "checkpoint path")->required();

  CLI::App* extract = app.add_subcommand("extract-keys",
                                         "score units and export key sets");
  add_common(extract, common);
  extract->add_option("--corpus", corpus_path, "corpus JSON")->required();
  extract->add_option("--checkpoint-in", checkpoint_in, "extractor checkpoint")->required();
  extract->add_option("--keysets", keysets_path, "key-set JSON output")->required();

  CLI::App* train_qa = app.add_subcommand("train-qa", "train the span model");
  add_common(train_qa, common);
  train_qa->add_option("--corpus", corpus_path, "corpus JSON")->required();
  train_qa->add_option("--keysets", keysets_path, "key-set JSON input")->required();
  train_qa->add_option("--checkpoint-out", checkpoint_out, "checkpoint path")->required();

  CLI::App* predict = app.add_subcommand("predict", "decode answers");
  add_common(predict, common);
  predict->add_option("--corpus", corpus_path, "corpus JSON")->required();
  predict->add_option("--keysets", keysets_path, "key-set JSON input")->required();
  predict->add_option("--checkpoint-in", checkpoint_in, "span model checkpoint")->required();
  predict->add_option("--predictions", predictions_path, "prediction JSON output")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions");
  add_common(evaluate, common);
  evaluate->add_option("--corpus", corpus_path, "corpus JSON")->required();
  evaluate->add_option("--predictions", predictions_path, "prediction JSON")->required();
  evaluate->add_option("--keysets", keysets_path, "key sets for coverage reporting");
  evaluate->add_option("--report", report_out, "report JSON output");

  CLI::App* inspect = app.add_subcommand("inspect-graph",
                                         "export one question's graph");
  add_common(inspect, common);
  inspect->add_option("--corpus", corpus_path, "corpus JSON")->required();
  inspect->add_option("--question", question_id, "question id")->required();
  inspect->add_option("--keysets", keysets_path,
                      "key sets (default: every utterance is a key)");
  inspect->add_option("--dot-out", dot_out, "DOT output path");
  inspect->add_option("--json-out", json_out, "JSON output path");

  CLI::App* gradcheck = app.add_subcommand("gradcheck",
                                           "finite-difference check of the "
                                           "composed loss on a reduced model");
  add_common(gradcheck, common);
  gradcheck->add_option("--corpus", corpus_path, "corpus JSON")->required();
  gradcheck->add_option("--instances", instances, "questions to check (default 2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(train_ex))
      return cmd_train_extractor(common, corpus_path, checkpoint_out);
    if (app.got_subcommand(extract))
      return cmd_extract_keys(common, corpus_path, checkpoint_in, keysets_path);
    if (app.got_subcommand(train_qa))
      return cmd_train_qa(common, corpus_path, keysets_path, checkpoint_out);
    if (app.got_subcommand(predict))
      return cmd_predict(common, corpus_path, keysets_path, checkpoint_in,
                         predictions_path);
    if (app.got_subcommand(evaluate))
      return cmd_evaluate(common, corpus_path, predictions_path, keysets_path,
                          report_out);
    if (app.got_subcommand(inspect))
      return cmd_inspect_graph(common, corpus_path, keysets_path, question_id,
                               dot_out, json_out);
    if (app.got_subcommand(gradcheck))
      return cmd_gradcheck(common, corpus_path, instances);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
