#include "quisg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace quisg::corpus {

using json = nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open corpus file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::filesystem::path& path, const std::string& raw) {
  try {
    return json::parse(raw);
  } catch (const json::parse_error& e) {
    std::size_t byte = e.byte > raw.size() ? raw.size() : e.byte;
    std::size_t line = 1 + static_cast<std::size_t>(
        std::count(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
    throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words, std::size_t b,
                       std::size_t e_incl) {
  std::string out;
  for (std::size_t i = b; i <= e_incl; ++i) {
    if (i > b) out += ' ';
    out += words[i];
  }
  return out;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError("missing key '" + std::string(key) + "' in " + where);
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string())
    throw ParseError("key '" + std::string(key) + "' in " + where + " is not a string");
  return v.get<std::string>();
}

void finalize_dialogue(Dialogue& d) {
  std::set<std::string> names;
  for (const Utterance& u : d.utterances)
    if (u.speaker) names.insert(*u.speaker);
  d.roster.assign(names.begin(), names.end());
}

Question make_question(std::string id, std::vector<std::string> words,
                       std::vector<AnswerSpan> answers) {
  Question q;
  q.id = std::move(id);
  q.words = std::move(words);
  q.answers = std::move(answers);
  q.answerable = !q.answers.empty();
  return q;
}

Corpus ingest_canonical(const json& root, const std::filesystem::path& path) {
  if (!root.is_array())
    throw ParseError(path.string() + ": top-level value must be an array of dialogues");
  Corpus corpus;
  for (const json& jd : root) {
    DialogueRecord rec;
    Dialogue& d = rec.dialogue;
    d.id = require_string(jd, "id", "dialogue object");
    if (jd.contains("scene") && !jd["scene"].is_null()) {
      Utterance scene;
      scene.index = 0;
      scene.is_scene = true;
      scene.words = split_words(jd["scene"].get<std::string>());
      d.utterances.push_back(std::move(scene));
    }
    for (const json& ju : require(jd, "utterances", "dialogue '" + d.id + "'")) {
      Utterance u;
      u.index = d.utterances.size();
      u.speaker = require_string(ju, "speaker", "utterance of dialogue '" + d.id + "'");
      u.words = split_words(require_string(ju, "text", "utterance of dialogue '" + d.id + "'"));
      d.utterances.push_back(std::move(u));
    }
    finalize_dialogue(d);
    validate_dialogue(d);
    if (jd.contains("questions")) {
      for (const json& jq : jd["questions"]) {
        std::string qid = require_string(jq, "id", "question of dialogue '" + d.id + "'");
        std::vector<AnswerSpan> answers;
        if (jq.contains("answers")) {
          for (const json& ja : jq["answers"]) {
            AnswerSpan a;
            a.utterance_index = require(ja, "utterance_index", "answer of '" + qid + "'").get<std::size_t>();
            a.start_word = require(ja, "start_word", "answer of '" + qid + "'").get<std::size_t>();
            a.end_word = require(ja, "end_word", "answer of '" + qid + "'").get<std::size_t>();
            if (a.utterance_index < d.utterances.size() &&
                a.end_word < d.utterances[a.utterance_index].words.size() &&
                a.start_word <= a.end_word)
              a.text = join_words(d.utterances[a.utterance_index].words, a.start_word,
                                  a.end_word);
            answers.push_back(std::move(a));
          }
        }
        Question q = make_question(std::move(qid),
                                   split_words(require_string(jq, "text", "question")),
                                   std::move(answers));
        validate_question(q, d);
        rec.questions.push_back(std::move(q));
      }
    }
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

// Layout: {"data":[{"title":..,"paragraphs":[{"utterances:":[{"speakers":
// [..],"utterance":..}],"qas":[{"id","question","answers":[{"answer_text",
// "utterance_id","inner_start","inner_end","is_speaker"}]}]}]}]}.
// Speaker-pointing answers have no word-level span and are dropped; a
// question whose answers are all dropped is dropped with it.
Corpus ingest_friendsqa(const json& root, const std::filesystem::path& path) {
  Corpus corpus;
  const json& data = require(root, "data", path.string());
  for (const json& jd : data) {
    std::string title = require_string(jd, "title", "data entry");
    const json& paragraphs = require(jd, "paragraphs", "entry '" + title + "'");
    std::size_t pidx = 0;
    for (const json& jp : paragraphs) {
      DialogueRecord rec;
      Dialogue& d = rec.dialogue;
      d.id = paragraphs.size() > 1 ? title + "#" + std::to_string(pidx) : title;
      const char* utt_key = jp.contains("utterances:") ? "utterances:" : "utterances";
      for (const json& ju : require(jp, utt_key, "paragraph of '" + title + "'")) {
        Utterance u;
        u.index = d.utterances.size();
        std::vector<std::string> speakers;
        for (const json& js : require(ju, "speakers", "utterance"))
          speakers.push_back(js.get<std::string>());
        std::string text = require_string(ju, "utterance", "utterance");
        bool note = speakers.empty() ||
                    (speakers.size() == 1 && speakers[0] == "#NOTE#");
        if (note && u.index == 0) {
          u.is_scene = true;
        } else {
          std::string full;
          for (std::size_t i = 0; i < speakers.size(); ++i) {
            if (i) full += " and ";
            full += speakers[i];
          }
          u.speaker = full.empty() ? "#NOTE#" : full;
        }
        u.words = split_words(text);
        d.utterances.push_back(std::move(u));
      }
      finalize_dialogue(d);
      validate_dialogue(d);
      if (jp.contains("qas")) {
        for (const json& jq : jp["qas"]) {
          std::string qid = require_string(jq, "id", "qa of '" + d.id + "'");
          std::vector<AnswerSpan> answers;
          for (const json& ja : require(jq, "answers", "qa '" + qid + "'")) {
            if (ja.contains("is_speaker") && ja["is_speaker"].get<bool>()) continue;
            AnswerSpan a;
            a.utterance_index = require(ja, "utterance_id", "answer of '" + qid + "'").get<std::size_t>();
            a.start_word = require(ja, "inner_start", "answer of '" + qid + "'").get<std::size_t>();
            a.end_word = require(ja, "inner_end", "answer of '" + qid + "'").get<std::size_t>();
            if (a.utterance_index >= d.utterances.size() ||
                a.start_word > a.end_word ||
                a.end_word >= d.utterances[a.utterance_index].words.size())
              continue;  // unmappable source span
            a.text = join_words(d.utterances[a.utterance_index].words, a.start_word,
                                a.end_word);
            answers.push_back(std::move(a));
          }
          if (answers.empty()) continue;  // only speaker answers: drop question
          Question q = make_question(std::move(qid),
                                     split_words(require_string(jq, "question", "qa")),
                                     std::move(answers));
          validate_question(q, d);
          rec.questions.push_back(std::move(q));
        }
      }
      corpus.push_back(std::move(rec));
      ++pidx;
    }
  }
  return corpus;
}

// Finds the first utterance word range whose words equal the answer words,
// comparing exactly first and case-insensitively as a fallback.
std::optional<AnswerSpan> find_text_span(const Dialogue& d, const std::string& text,
                                         std::optional<std::size_t> utterance_hint) {
  std::vector<std::string> target = split_words(text);
  if (target.empty()) return std::nullopt;
  auto lower = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (const Utterance& u : d.utterances) {
      if (utterance_hint && u.index != *utterance_hint) continue;
      if (u.words.size() < target.size()) continue;
      for (std::size_t s = 0; s + target.size() <= u.words.size(); ++s) {
        bool match = true;
        for (std::size_t t = 0; t < target.size(); ++t) {
          const std::string& a = u.words[s + t];
          const std::string& b = target[t];
          if (pass == 0 ? a != b : lower(a) != lower(b)) { match = false; break; }
        }
        if (match) {
          AnswerSpan span;
          span.utterance_index = u.index;
          span.start_word = s;
          span.end_word = s + target.size() - 1;
          span.text = join_words(u.words, span.start_word, span.end_word);
          return span;
        }
      }
    }
  }
  return std::nullopt;
}

// Layout: {"data":[{"title":..,"paragraphs":[{"utterances":[{"speaker":..,
// "text" or "utterance":..}],"qas":[{"id","question","is_impossible",
// "answers":[{"text", optional "utterance_id"}]}]}]}]}. Answers carry text
// only; the word span is recovered by searching the named (or every)
// utterance. Unlocatable answers are dropped; a question keeping no answer
// while not impossible is dropped.
Corpus ingest_molweni(const json& root, const std::filesystem::path& path) {
  Corpus corpus;
  const json& data = require(root, "data", path.string());
  for (const json& jd : data) {
    std::string title = require_string(jd, "title", "data entry");
    const json& paragraphs = require(jd, "paragraphs", "entry '" + title + "'");
    std::size_t pidx = 0;
    for (const json& jp : paragraphs) {
      DialogueRecord rec;
      Dialogue& d = rec.dialogue;
      d.id = paragraphs.size() > 1 ? title + "#" + std::to_string(pidx) : title;
      for (const json& ju : require(jp, "utterances", "paragraph of '" + title + "'")) {
        Utterance u;
        u.index = d.utterances.size();
        u.speaker = require_string(ju, "speaker", "utterance");
        const char* text_key = ju.contains("text") ? "text" : "utterance";
        u.words = split_words(require_string(ju, text_key, "utterance"));
        d.utterances.push_back(std::move(u));
      }
      finalize_dialogue(d);
      validate_dialogue(d);
      if (jp.contains("qas")) {
        for (const json& jq : jp["qas"]) {
          std::string qid = require_string(jq, "id", "qa of '" + d.id + "'");
          bool impossible = jq.contains("is_impossible") && jq["is_impossible"].get<bool>();
          std::vector<AnswerSpan> answers;
          if (!impossible && jq.contains("answers")) {
            for (const json& ja : jq["answers"]) {
              std::optional<std::size_t> hint;
              if (ja.contains("utterance_id"))
                hint = ja["utterance_id"].get<std::size_t>();
              auto span = find_text_span(d, require_string(ja, "text", "answer"), hint);
              if (span) answers.push_back(std::move(*span));
            }
            if (answers.empty()) continue;  // nothing locatable: drop question
          }
          Question q = make_question(std::move(qid),
                                     split_words(require_string(jq, "question", "qa")),
                                     std::move(answers));
          validate_question(q, d);
          rec.questions.push_back(std::move(q));
        }
      }
      corpus.push_back(std::move(rec));
      ++pidx;
    }
  }
  return corpus;
}

}  // namespace

CorpusFormat parse_corpus_format(const std::string& tag) {
  if (tag == "canonical") return CorpusFormat::kCanonical;
  if (tag == "friendsqa") return CorpusFormat::kFriendsQa;
  if (tag == "molweni") return CorpusFormat::kMolweni;
  throw UsageError("unknown corpus format '" + tag +
                   "' (expected canonical, friendsqa, or molweni)");
}

Corpus ingest_corpus(const std::filesystem::path& path, CorpusFormat format) {
  json root = parse_json(path, read_file(path));
  switch (format) {
    case CorpusFormat::kCanonical: return ingest_canonical(root, path);
    case CorpusFormat::kFriendsQa: return ingest_friendsqa(root, path);
    case CorpusFormat::kMolweni: return ingest_molweni(root, path);
  }
  throw UsageError("unreachable corpus format");
}

void validate_dialogue(const Dialogue& d) {
  if (d.id.empty()) throw ValidationError("dialogue with empty id");
  if (d.utterances.empty())
    throw ValidationError("dialogue '" + d.id + "' has no utterances");
  for (const Utterance& u : d.utterances) {
    if (u.index != static_cast<std::size_t>(&u - d.utterances.data()))
      throw ValidationError("dialogue '" + d.id + "' has non-contiguous utterance indices");
    if (u.is_scene) {
      if (u.index != 0)
        throw ValidationError("dialogue '" + d.id +
                              "' has a scene description at index " +
                              std::to_string(u.index) + " (only index 0 is allowed)");
      if (u.speaker)
        throw ValidationError("dialogue '" + d.id + "' has a scene description with a speaker");
    } else {
      if (!u.speaker || u.speaker->empty())
        throw ValidationError("dialogue '" + d.id + "' utterance " +
                              std::to_string(u.index) + " has no speaker");
    }
    if (u.words.empty())
      throw ValidationError("dialogue '" + d.id + "' utterance " +
                            std::to_string(u.index) + " has no words");
    for (const std::string& w : u.words)
      if (w.empty() || w.find_first_of(" \t\n") != std::string::npos)
        throw ValidationError("dialogue '" + d.id + "' utterance " +
                              std::to_string(u.index) + " has a malformed word");
  }
  bool has_non_scene = false;
  for (const Utterance& u : d.utterances) has_non_scene |= !u.is_scene;
  if (!has_non_scene)
    throw ValidationError("dialogue '" + d.id + "' has only a scene description");
}

void validate_question(const Question& q, const Dialogue& d) {
  if (q.id.empty()) throw ValidationError("question with empty id in dialogue '" + d.id + "'");
  if (q.words.empty()) throw ValidationError("question '" + q.id + "' has no words");
  if (q.answerable != !q.answers.empty())
    throw ValidationError("question '" + q.id + "' answerable flag mismatches answers");
  for (const AnswerSpan& a : q.answers) {
    if (a.utterance_index >= d.utterances.size())
      throw ValidationError("question '" + q.id + "' answer points at utterance " +
                            std::to_string(a.utterance_index) + " of " +
                            std::to_string(d.utterances.size()));
    const Utterance& u = d.utterances[a.utterance_index];
    if (a.start_word > a.end_word || a.end_word >= u.words.size())
      throw ValidationError("question '" + q.id + "' answer word range [" +
                            std::to_string(a.start_word) + ", " +
                            std::to_string(a.end_word) + "] is out of bounds");
    std::string expect = join_words(u.words, a.start_word, a.end_word);
    if (a.text != expect)
      throw ValidationError("question '" + q.id + "' answer text '" + a.text +
                            "' does not match dialogue words '" + expect + "'");
  }
}

std::string normalize_name_word(const std::string& word) {
  std::size_t b = 0, e = word.size();
  auto alnum = [&](std::size_t i) {
    return std::isalnum(static_cast<unsigned char>(word[i])) != 0;
  };
  while (b < e && !alnum(b)) ++b;
  while (e > b && !alnum(e - 1)) --e;
  std::string out = word.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> name_parts(const std::string& full_name) {
  std::vector<std::string> parts;
  for (const std::string& p : split_words(full_name)) {
    std::string n = normalize_name_word(p);
    if (!n.empty()) parts.push_back(n);
  }
  return parts;
}

NerHints load_ner_hints(const std::filesystem::path& path) {
  json root = parse_json(path, read_file(path));
  if (!root.is_object())
    throw ParseError(path.string() + ": hints file must map question ids to name arrays");
  NerHints hints;
  for (const auto& [qid, names] : root.items()) {
    std::vector<std::string>& list = hints[qid];
    for (const json& n : names) list.push_back(n.get<std::string>());
  }
  return hints;
}

std::vector<SpeakerMention> resolve_question_speakers(
    const Question& question, const Dialogue& dialogue,
    const std::vector<std::string>* external_ner) {
  std::set<std::string> candidate_words;
  if (external_ner) {
    for (const std::string& name : *external_ner)
      for (const std::string& part : name_parts(name)) candidate_words.insert(part);
  }
  std::vector<SpeakerMention> mentions;
  for (std::size_t i = 0; i < question.words.size(); ++i) {
    std::string w = normalize_name_word(question.words[i]);
    if (w.empty()) continue;
    if (external_ner && !candidate_words.count(w)) continue;
    for (const std::string& full : dialogue.roster) {
      for (const std::string& part : name_parts(full)) {
        if (part == w) {
          mentions.push_back({i, full});
          break;
        }
      }
    }
  }
  std::sort(mentions.begin(), mentions.end());
  mentions.erase(std::unique(mentions.begin(), mentions.end()), mentions.end());
  return mentions;
}

}  // namespace quisg::corpus
