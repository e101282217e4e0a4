#include "quisg/graph.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace quisg::graph {

using nlohmann::json;

const char* node_type_name(NodeType t) {
  switch (t) {
    case NodeType::kQw: return "qw";
    case NodeType::kQs: return "qs";
    case NodeType::kDs: return "ds";
    case NodeType::kDw: return "dw";
  }
  return "?";
}

NodeType node_type_from_name(const std::string& name) {
  if (name == "qw") return NodeType::kQw;
  if (name == "qs") return NodeType::kQs;
  if (name == "ds") return NodeType::kDs;
  if (name == "dw") return NodeType::kDw;
  throw ParseError("unknown node type '" + name + "'");
}

std::size_t QuisgGraph::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < n(); ++j) d += adjacency[i * n() + j];
  return d;
}

std::pair<std::size_t, std::size_t> questioning_word_span(
    const std::vector<std::string>& question_words) {
  static const std::set<std::string> kLexicon{
      "what", "who", "whom", "whose", "when", "where", "why", "how", "which"};
  static const std::array<const char*, 3> kMultiword{"for", "what", "reason"};

  std::vector<std::string> norm(question_words.size());
  for (std::size_t i = 0; i < question_words.size(); ++i)
    norm[i] = corpus::normalize_name_word(question_words[i]);

  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (i + kMultiword.size() <= norm.size()) {
      bool all = true;
      for (std::size_t j = 0; j < kMultiword.size(); ++j)
        all = all && norm[i + j] == kMultiword[j];
      if (all) return {i, i + kMultiword.size()};
    }
    if (kLexicon.count(norm[i])) return {i, i + 1};
  }
  return {0, 1};
}

std::vector<Node> build_nodes(const BuildInputs& in) {
  if (in.keys.utterances.empty())
    throw PreconditionError("cannot build a graph from an empty key set");
  std::vector<Node> nodes;

  // The question node.
  {
    auto [b, e] = questioning_word_span(in.question.words);
    Node qw;
    qw.type = NodeType::kQw;
    qw.pool = PoolKind::kMean;
    for (std::size_t w = b; w < e; ++w) {
      const text::TokenRange& r = in.map.question_word_tokens[w];
      for (std::size_t t = r.begin; t < r.end; ++t) qw.rows.push_back(t);
    }
    std::string label;
    for (std::size_t w = b; w < e; ++w) {
      if (!label.empty()) label += ' ';
      label += in.question.words[w];
    }
    qw.origin = QwOrigin{b, e};
    qw.label = label;
    nodes.push_back(std::move(qw));
  }

  // Question speaker nodes, ordered by first mention.
  std::vector<std::string> qs_order;
  for (const corpus::SpeakerMention& m : in.mentions)
    if (std::find(qs_order.begin(), qs_order.end(), m.resolved_speaker) == qs_order.end())
      qs_order.push_back(m.resolved_speaker);
  for (const std::string& speaker : qs_order) {
    Node qs;
    qs.type = NodeType::kQs;
    QsOrigin origin;
    origin.speaker = speaker;
    for (const corpus::SpeakerMention& m : in.mentions) {
      if (m.resolved_speaker != speaker) continue;
      origin.mention_words.push_back(m.question_word_index);
      const text::TokenRange& r = in.map.question_word_tokens[m.question_word_index];
      for (std::size_t t = r.begin; t < r.end; ++t) qs.rows.push_back(t);
    }
    qs.pool = qs.rows.size() > 1 ? PoolKind::kMean : PoolKind::kSingleRow;
    qs.origin = std::move(origin);
    qs.label = speaker;
    nodes.push_back(std::move(qs));
  }

  // Dialogue speaker nodes, ordered by first key utterance.
  std::vector<std::string> ds_order;
  for (std::size_t u : in.keys.utterances) {
    const corpus::Utterance& utt = in.dialogue.utterances[u];
    if (!utt.speaker) continue;
    if (std::find(ds_order.begin(), ds_order.end(), *utt.speaker) == ds_order.end())
      ds_order.push_back(*utt.speaker);
  }
  for (const std::string& speaker : ds_order) {
    Node ds;
    ds.type = NodeType::kDs;
    ds.pool = PoolKind::kMean;
    DsOrigin origin;
    origin.speaker = speaker;
    for (std::size_t u : in.keys.utterances) {
      const corpus::Utterance& utt = in.dialogue.utterances[u];
      if (!utt.speaker || *utt.speaker != speaker) continue;
      origin.key_utterances.push_back(u);
      const text::TokenRange& r = in.map.speaker_token_spans[u];
      for (std::size_t t = r.begin; t < r.end; ++t) ds.rows.push_back(t);
    }
    ds.origin = std::move(origin);
    ds.label = speaker;
    nodes.push_back(std::move(ds));
  }

  // Dialogue word nodes: one per text-word token of every key utterance.
  for (std::size_t u : in.keys.utterances) {
    const corpus::Utterance& utt = in.dialogue.utterances[u];
    const std::vector<text::TokenRange>& words = in.map.word_token_spans[u];
    if (words.empty())
      throw PreconditionError("key utterance " + std::to_string(u) +
                              " has no tokens (dropped by truncation?)");
    for (std::size_t w = 0; w < words.size(); ++w) {
      for (std::size_t t = words[w].begin; t < words[w].end; ++t) {
        Node dw;
        dw.type = NodeType::kDw;
        dw.pool = PoolKind::kSingleRow;
        dw.rows = {t};
        dw.origin = DwOrigin{u, w, utt.is_scene};
        dw.label = in.seq.tokens[t];
        nodes.push_back(std::move(dw));
      }
    }
  }
  return nodes;
}

namespace {

void add_edge(QuisgGraph& g, std::size_t i, std::size_t j, EdgeRule rule) {
  const std::size_t n = g.n();
  g.adjacency[i * n + j] = 1;
  g.adjacency[j * n + i] = 1;
  g.edge_rules.emplace(std::minmax(i, j), rule);
}

// True when any scene word names this speaker.
bool speaker_in_scene(const std::vector<std::string>& scene_words,
                      const std::string& speaker) {
  const std::vector<std::string> parts = corpus::name_parts(speaker);
  for (const std::string& w : scene_words) {
    const std::string n = corpus::normalize_name_word(w);
    if (n.empty()) continue;
    for (const std::string& p : parts)
      if (p == n) return true;
  }
  return false;
}

}  // namespace

QuisgGraph build_graph(const BuildInputs& in, std::size_t k_w) {
  QuisgGraph g;
  g.nodes = build_nodes(in);
  const std::size_t n = g.n();
  g.adjacency.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) g.adjacency[i * n + i] = 1;

  std::vector<std::size_t> qs_nodes, ds_nodes, dw_nodes;
  for (std::size_t i = 0; i < n; ++i) {
    switch (g.nodes[i].type) {
      case NodeType::kQs: qs_nodes.push_back(i); break;
      case NodeType::kDs: ds_nodes.push_back(i); break;
      case NodeType::kDw: dw_nodes.push_back(i); break;
      case NodeType::kQw: break;
    }
  }
  auto ds_for_speaker = [&](const std::string& speaker) -> std::optional<std::size_t> {
    for (std::size_t i : ds_nodes)
      if (std::get<DsOrigin>(g.nodes[i].origin).speaker == speaker) return i;
    return std::nullopt;
  };

  // R1: word-window edges within one utterance.
  for (std::size_t a = 0; a < dw_nodes.size(); ++a) {
    const DwOrigin& oa = std::get<DwOrigin>(g.nodes[dw_nodes[a]].origin);
    for (std::size_t b = a + 1; b < dw_nodes.size(); ++b) {
      const DwOrigin& ob = std::get<DwOrigin>(g.nodes[dw_nodes[b]].origin);
      if (oa.utterance != ob.utterance) continue;
      const std::size_t dist = oa.word > ob.word ? oa.word - ob.word : ob.word - oa.word;
      if (dist <= k_w) add_edge(g, dw_nodes[a], dw_nodes[b], EdgeRule::kWordWindow);
    }
  }

  // R2 and R3: word nodes to their speaker and to the question node.
  for (std::size_t i : dw_nodes) {
    const DwOrigin& o = std::get<DwOrigin>(g.nodes[i].origin);
    if (!o.scene) {
      const corpus::Utterance& utt = in.dialogue.utterances[o.utterance];
      if (auto ds = ds_for_speaker(*utt.speaker))
        add_edge(g, i, *ds, EdgeRule::kWordSpeaker);
    }
    add_edge(g, i, 0, EdgeRule::kWordQuestion);
  }

  // R4, R5, R6: question speaker edges.
  for (std::size_t a = 0; a < qs_nodes.size(); ++a)
    for (std::size_t b = a + 1; b < qs_nodes.size(); ++b)
      add_edge(g, qs_nodes[a], qs_nodes[b], EdgeRule::kSpeakerPair);
  for (std::size_t i : qs_nodes) {
    const QsOrigin& o = std::get<QsOrigin>(g.nodes[i].origin);
    if (auto ds = ds_for_speaker(o.speaker))
      add_edge(g, i, *ds, EdgeRule::kSpeakerLink);
    add_edge(g, i, 0, EdgeRule::kSpeakerQuestion);
  }

  // R7: scene words to speakers named in the scene description.
  std::vector<std::size_t> scene_dw;
  for (std::size_t i : dw_nodes)
    if (std::get<DwOrigin>(g.nodes[i].origin).scene) scene_dw.push_back(i);
  if (!scene_dw.empty()) {
    const std::size_t scene_utt =
        std::get<DwOrigin>(g.nodes[scene_dw[0]].origin).utterance;
    const std::vector<std::string>& scene_words =
        in.dialogue.utterances[scene_utt].words;
    for (std::size_t d : ds_nodes) {
      const DsOrigin& o = std::get<DsOrigin>(g.nodes[d].origin);
      if (!speaker_in_scene(scene_words, o.speaker)) continue;
      for (std::size_t s : scene_dw) add_edge(g, s, d, EdgeRule::kSceneSpeaker);
    }
  }
  return g;
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

const char* dot_color(NodeType t) {
  switch (t) {
    case NodeType::kQw: return "lightblue";
    case NodeType::kQs: return "gold";
    case NodeType::kDs: return "salmon";
    case NodeType::kDw: return "lightgray";
  }
  return "white";
}

}  // namespace

std::string export_dot(const QuisgGraph& g) {
  std::string out = "graph quisg {\n  node [style=filled];\n";
  for (std::size_t i = 0; i < g.n(); ++i) {
    const Node& nd = g.nodes[i];
    out += "  n" + std::to_string(i) + " [label=\"" +
           std::string(node_type_name(nd.type)) + ": " + dot_escape(nd.label) +
           "\" fillcolor=" + dot_color(nd.type) + "];\n";
  }
  for (std::size_t i = 0; i < g.n(); ++i)
    out += "  n" + std::to_string(i) + " -- n" + std::to_string(i) + ";\n";
  for (const auto& [edge, rule] : g.edge_rules)
    out += "  n" + std::to_string(edge.first) + " -- n" + std::to_string(edge.second) +
           " [label=\"" + std::to_string(static_cast<int>(rule)) + "\"];\n";
  out += "}\n";
  return out;
}

json export_json(const QuisgGraph& g) {
  json nodes = json::array();
  for (const Node& nd : g.nodes) {
    json jn;
    jn["type"] = node_type_name(nd.type);
    jn["pool"] = nd.pool == PoolKind::kMean ? "mean" : "single";
    jn["rows"] = nd.rows;
    jn["label"] = nd.label;
    json jo;
    if (const auto* qw = std::get_if<QwOrigin>(&nd.origin)) {
      jo["word_begin"] = qw->word_begin;
      jo["word_end"] = qw->word_end;
    } else if (const auto* qs = std::get_if<QsOrigin>(&nd.origin)) {
      jo["speaker"] = qs->speaker;
      jo["mention_words"] = qs->mention_words;
    } else if (const auto* ds = std::get_if<DsOrigin>(&nd.origin)) {
      jo["speaker"] = ds->speaker;
      jo["key_utterances"] = ds->key_utterances;
    } else if (const auto* dw = std::get_if<DwOrigin>(&nd.origin)) {
      jo["utterance"] = dw->utterance;
      jo["word"] = dw->word;
      jo["scene"] = dw->scene;
    }
    jn["origin"] = std::move(jo);
    nodes.push_back(std::move(jn));
  }
  json edges = json::array();
  for (const auto& [edge, rule] : g.edge_rules)
    edges.push_back({{"a", edge.first},
                     {"b", edge.second},
                     {"rule", static_cast<int>(rule)}});
  return json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

QuisgGraph import_json(const json& j) {
  QuisgGraph g;
  if (!j.contains("nodes") || !j.contains("edges"))
    throw ParseError("graph JSON must hold 'nodes' and 'edges'");
  for (const json& jn : j["nodes"]) {
    Node nd;
    nd.type = node_type_from_name(jn.at("type").get<std::string>());
    const std::string pool = jn.at("pool").get<std::string>();
    if (pool != "mean" && pool != "single")
      throw ParseError("unknown pool kind '" + pool + "'");
    nd.pool = pool == "mean" ? PoolKind::kMean : PoolKind::kSingleRow;
    nd.rows = jn.at("rows").get<std::vector<std::size_t>>();
    nd.label = jn.at("label").get<std::string>();
    const json& jo = jn.at("origin");
    switch (nd.type) {
      case NodeType::kQw:
        nd.origin = QwOrigin{jo.at("word_begin").get<std::size_t>(),
                             jo.at("word_end").get<std::size_t>()};
        break;
      case NodeType::kQs: {
        QsOrigin o;
        o.speaker = jo.at("speaker").get<std::string>();
        o.mention_words = jo.at("mention_words").get<std::vector<std::size_t>>();
        nd.origin = std::move(o);
        break;
      }
      case NodeType::kDs: {
        DsOrigin o;
        o.speaker = jo.at("speaker").get<std::string>();
        o.key_utterances = jo.at("key_utterances").get<std::vector<std::size_t>>();
        nd.origin = std::move(o);
        break;
      }
      case NodeType::kDw:
        nd.origin = DwOrigin{jo.at("utterance").get<std::size_t>(),
                             jo.at("word").get<std::size_t>(),
                             jo.at("scene").get<bool>()};
        break;
    }
    g.nodes.push_back(std::move(nd));
  }
  const std::size_t n = g.n();
  g.adjacency.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) g.adjacency[i * n + i] = 1;
  for (const json& je : j["edges"]) {
    const std::size_t a = je.at("a").get<std::size_t>();
    const std::size_t b = je.at("b").get<std::size_t>();
    const int rule = je.at("rule").get<int>();
    if (a >= n || b >= n)
      throw ParseError("edge endpoint out of range in graph JSON");
    if (rule < 1 || rule > 7)
      throw ParseError("edge rule " + std::to_string(rule) + " out of range");
    add_edge(g, a, b, static_cast<EdgeRule>(rule));
  }
  return g;
}

}  // namespace quisg::graph
