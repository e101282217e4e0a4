#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <optional>
#include <string>
#include <vector>

#include "quisg/corpus.hpp"
#include "quisg/errors.hpp"
#include "quisg/metrics.hpp"

using namespace quisg;

namespace {

corpus::Question gold_question(const std::string& id,
                               const std::vector<std::string>& answers) {
  corpus::Question q;
  q.id = id;
  q.words = {"irrelevant"};
  for (const auto& text : answers) {
    corpus::AnswerSpan span;
    span.text = text;
    q.answers.push_back(span);
  }
  q.answerable = !answers.empty();
  return q;
}

}  // namespace

TEST_CASE("answer normalization lowers, strips, and drops articles") {
  using metrics::normalize_answer;
  CHECK(normalize_answer("The Tar Bucket") == "tar bucket");
  CHECK(normalize_answer("noon.") == "noon");
  CHECK(normalize_answer("a  spare   kite") == "spare kite");
  CHECK(normalize_answer("An owl, an owl!") == "owl owl");
  CHECK(normalize_answer("Big-Apple") == "bigapple");
  CHECK(normalize_answer("don't") == "dont");
  CHECK(normalize_answer("the a an") == "");
  CHECK(normalize_answer("") == "");
  CHECK(metrics::normalized_tokens("The Old Mill Road") ==
        std::vector<std::string>{"old", "mill", "road"});
}

TEST_CASE("token F1 and exact match reproduce hand-worked cases") {
  using metrics::exact_match;
  using metrics::token_f1;

  // identical after normalization
  CHECK(exact_match("Cedar Stump", "cedar stump"));
  CHECK(token_f1("Cedar Stump", "cedar stump") == doctest::Approx(1.0).epsilon(1e-12));

  // the worked three-of-five overlap: precision 1, recall 3/5
  CHECK_FALSE(exact_match("up all night", "stayed up all night talking"));
  CHECK(token_f1("up all night", "stayed up all night talking") ==
        doctest::Approx(0.75).epsilon(1e-12));

  // articles vanish before comparison
  CHECK(exact_match("the trail", "trail"));
  CHECK(token_f1("the trail", "trail") == doctest::Approx(1.0).epsilon(1e-12));

  // punctuation vanishes too
  CHECK(exact_match("noon.", "noon"));

  // disjoint tokens
  CHECK(token_f1("apple", "banana") == 0.0);
  CHECK_FALSE(exact_match("apple", "banana"));

  // precision 1, recall 2/3: F1 = 0.8
  CHECK(token_f1("oak cabinet", "the oak cabinet drawer") ==
        doctest::Approx(0.8).epsilon(1e-12));

  // duplicates count once per gold occurrence: precision 1/2, recall 1
  CHECK(token_f1("night night", "night") ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // both sides empty after normalization
  CHECK(token_f1("the", "an") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(token_f1("the", "word") == 0.0);
}

TEST_CASE("question scoring handles null predictions and many golds") {
  using metrics::score_question;

  auto q = gold_question("q1", {"the tar bucket"});
  auto s = score_question(std::optional<std::string>{"tar bucket"}, q);
  CHECK(s.em == 1.0);
  CHECK(s.f1 == doctest::Approx(1.0).epsilon(1e-12));

  // null on an answerable question scores zero
  s = score_question(std::nullopt, q);
  CHECK(s.em == 0.0);
  CHECK(s.f1 == 0.0);

  // null on an unanswerable question scores one
  auto na = gold_question("q2", {});
  s = score_question(std::nullopt, na);
  CHECK(s.em == 1.0);
  CHECK(s.f1 == 1.0);

  // any answer to an unanswerable question scores zero
  s = score_question(std::optional<std::string>{"tar bucket"}, na);
  CHECK(s.em == 0.0);
  CHECK(s.f1 == 0.0);

  // the best gold wins
  auto multi = gold_question("q3", {"banana", "oak cabinet"});
  s = score_question(std::optional<std::string>{"oak"}, multi);
  CHECK(s.em == 0.0);
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  s = score_question(std::optional<std::string>{"banana"}, multi);
  CHECK(s.em == 1.0);
  CHECK(s.f1 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("corpus scoring macro-averages and validates the id sets") {
  corpus::Corpus gold(2);
  gold[0].dialogue.id = "d1";
  gold[0].questions = {gold_question("a", {"red kite"}),
                       gold_question("b", {"noon"})};
  gold[1].dialogue.id = "d2";
  gold[1].questions = {gold_question("c", {}),
                       gold_question("d", {"stayed up all night talking"})};

  metrics::Predictions preds{
      {"a", std::optional<std::string>{"red kite"}},   // EM 1, F1 1
      {"b", std::optional<std::string>{"midnight"}},   // EM 0, F1 0
      {"c", std::nullopt},                             // EM 1, F1 1
      {"d", std::optional<std::string>{"up all night"}},  // EM 0, F1 0.75
  };

  auto report = metrics::score(preds, gold);
  CHECK(report.n_questions == 4);
  CHECK(report.em == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(report.f1 == doctest::Approx(100.0 * 2.75 / 4.0).epsilon(1e-12));
  CHECK(report.per_speaker.empty());

  SUBCASE("unknown prediction ids are rejected") {
    auto bad = preds;
    bad["zz"] = std::nullopt;
    CHECK_THROWS_AS(metrics::score(bad, gold), ValidationError);
  }

  SUBCASE("every gold question needs a prediction") {
    auto partial = preds;
    partial.erase("d");
    CHECK_THROWS_AS(metrics::score(partial, gold), ValidationError);
  }

  SUBCASE("mention groups split the report by speaker") {
    metrics::MentionIndex mentions;
    mentions["a"] = {corpus::SpeakerMention{0, "Ann Pole"},
                     corpus::SpeakerMention{3, "Bo Reyes"}};
    mentions["b"] = {corpus::SpeakerMention{1, "Ann Pole"}};
    // c and d mention nobody

    auto r = metrics::score(preds, gold, &mentions);
    CHECK(r.with_speaker.count == 2);
    CHECK(r.without_speaker.count == 2);
    CHECK(r.with_speaker.f1() == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(r.without_speaker.f1() == doctest::Approx(100.0 * 1.75 / 2.0).epsilon(1e-12));
    REQUIRE(r.per_speaker.size() == 2);
    // Ann picks up questions a and b, Bo only a
    CHECK(r.per_speaker.at("Ann Pole").count == 2);
    CHECK(r.per_speaker.at("Ann Pole").f1() == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(r.per_speaker.at("Bo Reyes").count == 1);
    CHECK(r.per_speaker.at("Bo Reyes").f1() == doctest::Approx(100.0).epsilon(1e-12));
  }

  SUBCASE("a duplicated mention of one speaker counts once") {
    metrics::MentionIndex mentions;
    mentions["a"] = {corpus::SpeakerMention{0, "Ann Pole"},
                     corpus::SpeakerMention{2, "Ann Pole"}};
    auto r = metrics::score(preds, gold, &mentions);
    CHECK(r.per_speaker.at("Ann Pole").count == 1);
  }
}

TEST_CASE("an empty evaluation reports zeros without dividing") {
  auto report = metrics::score({}, {});
  CHECK(report.n_questions == 0);
  CHECK(report.em == 0.0);
  CHECK(report.f1 == 0.0);
  CHECK(metrics::GroupScore{}.f1() == 0.0);
}
