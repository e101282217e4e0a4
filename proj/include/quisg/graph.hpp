#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "quisg/corpus.hpp"
#include "quisg/key_extractor.hpp"
#include "quisg/textseq.hpp"

#include "json.hpp"

namespace quisg::graph {

enum class NodeType : std::uint8_t { kQw, kQs, kDs, kDw };

const char* node_type_name(NodeType t);
NodeType node_type_from_name(const std::string& name);

// How a node's initial state is pooled from its encoder rows.
enum class PoolKind : std::uint8_t { kSingleRow, kMean };

struct QwOrigin {
  std::size_t word_begin = 0;  // question word indices, half-open
  std::size_t word_end = 0;
  bool operator==(const QwOrigin&) const = default;
};
struct QsOrigin {
  std::string speaker;
  std::vector<std::size_t> mention_words;  // question word indices
  bool operator==(const QsOrigin&) const = default;
};
struct DsOrigin {
  std::string speaker;
  std::vector<std::size_t> key_utterances;  // this speaker's key turns
  bool operator==(const DsOrigin&) const = default;
};
struct DwOrigin {
  std::size_t utterance = 0;
  std::size_t word = 0;
  bool scene = false;
  bool operator==(const DwOrigin&) const = default;
};
using NodeOrigin = std::variant<QwOrigin, QsOrigin, DsOrigin, DwOrigin>;

struct Node {
  NodeType type = NodeType::kQw;
  PoolKind pool = PoolKind::kSingleRow;
  std::vector<std::size_t> rows;  // global rows of the joint hidden matrix
  NodeOrigin origin;
  std::string label;  // display text for exports

  bool operator==(const Node&) const = default;
};

// Which construction rule produced an edge.
enum class EdgeRule : std::uint8_t {
  kWordWindow = 1,    // dw-dw, same utterance, close words
  kWordSpeaker = 2,   // dw-ds, word to its own speaker
  kWordQuestion = 3,  // dw-qw
  kSpeakerPair = 4,   // qs-qs
  kSpeakerLink = 5,   // qs-ds, same person
  kSpeakerQuestion = 6,  // qs-qw
  kSceneSpeaker = 7,  // scene dw-ds, name spotted in the scene text
};

struct QuisgGraph {
  std::vector<Node> nodes;
  // Row-major n x n, symmetric, ones on the diagonal.
  std::vector<std::uint8_t> adjacency;
  // Rule per undirected edge, keyed by (i, j) with i < j.
  std::map<std::pair<std::size_t, std::size_t>, EdgeRule> edge_rules;

  std::size_t n() const { return nodes.size(); }
  bool has_edge(std::size_t i, std::size_t j) const {
    return adjacency[i * n() + j] != 0;
  }
  std::size_t degree(std::size_t i) const;

  bool operator==(const QuisgGraph&) const = default;
};

struct BuildInputs {
  const corpus::Question& question;
  const std::vector<corpus::SpeakerMention>& mentions;
  const keyex::KeySet& keys;
  const corpus::Dialogue& dialogue;
  const text::TokenSequence& seq;
  const text::AlignmentMap& map;
};

// Node order: the qw node, qs nodes by first mention, ds nodes by first
// key utterance, then dw nodes per key utterance in token order. Exactly
// one qw node always exists.
std::vector<Node> build_nodes(const BuildInputs& in);

// Nodes plus the seven edge rules and self-loops. k_w bounds the word
// distance of rule 1.
QuisgGraph build_graph(const BuildInputs& in, std::size_t k_w);

std::string export_dot(const QuisgGraph& g);
nlohmann::json export_json(const QuisgGraph& g);
QuisgGraph import_json(const nlohmann::json& j);

// The questioning word span [begin, end) over question word indices:
// the leftmost interrogative (checking a small multiword list first),
// falling back to the first question word.
std::pair<std::size_t, std::size_t> questioning_word_span(
    const std::vector<std::string>& question_words);

}  // namespace quisg::graph
