#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quisg/errors.hpp"

namespace quisg::corpus {

// Word-level gold answer; end_word is inclusive. text always equals the
// space-joined words of the referenced range.
struct AnswerSpan {
  std::size_t utterance_index = 0;
  std::size_t start_word = 0;
  std::size_t end_word = 0;
  std::string text;

  bool operator==(const AnswerSpan&) const = default;
};

// One speaker turn. A scene description is a speaker-less utterance that
// may only appear at index 0.
struct Utterance {
  std::size_t index = 0;
  std::optional<std::string> speaker;
  std::vector<std::string> words;
  bool is_scene = false;

  bool operator==(const Utterance&) const = default;
};

struct Question {
  std::string id;
  std::vector<std::string> words;
  std::vector<AnswerSpan> answers;
  bool answerable = false;  // true iff answers is non-empty

  bool operator==(const Question&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
  // Distinct speaker full names of non-scene utterances, sorted.
  std::vector<std::string> roster;

  bool operator==(const Dialogue&) const = default;
};

// A question word resolved against the dialogue roster.
struct SpeakerMention {
  std::size_t question_word_index = 0;
  std::string resolved_speaker;

  bool operator==(const SpeakerMention&) const = default;
  auto operator<=>(const SpeakerMention&) const = default;
};

struct DialogueRecord {
  Dialogue dialogue;
  std::vector<Question> questions;

  bool operator==(const DialogueRecord&) const = default;
};

using Corpus = std::vector<DialogueRecord>;

enum class CorpusFormat { kCanonical, kFriendsQa, kMolweni };

// Accepts "canonical", "friendsqa", "molweni".
CorpusFormat parse_corpus_format(const std::string& tag);

// Loads and validates a corpus. Throws ParseError (with line number) on
// malformed JSON and ValidationError (naming the question id) on spans
// that do not match the dialogue words.
Corpus ingest_corpus(const std::filesystem::path& path, CorpusFormat format);

// Throw ValidationError when an invariant is broken.
void validate_dialogue(const Dialogue& d);
void validate_question(const Question& q, const Dialogue& d);

// Lowercases and trims non-alphanumeric characters from both ends.
std::string normalize_name_word(const std::string& word);
// Lowercased whitespace-separated parts of a full speaker name.
std::vector<std::string> name_parts(const std::string& full_name);

// Optional externally computed person-name list per question id.
using NerHints = std::map<std::string, std::vector<std::string>>;
NerHints load_ner_hints(const std::filesystem::path& path);

// Matches question words against roster name parts, case-insensitively.
// When external_ner is given, only words appearing inside one of the
// provided names are candidates. Unresolvable names yield no mention.
// One mention per (question word, resolved speaker) pair.
std::vector<SpeakerMention> resolve_question_speakers(
    const Question& question, const Dialogue& dialogue,
    const std::vector<std::string>* external_ner = nullptr);

}  // namespace quisg::corpus
