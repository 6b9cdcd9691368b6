#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fidfix/ast.hpp"
#include "fidfix/common.hpp"
#include "fidfix/preprocess.hpp"

namespace fidfix {

inline bool exact_match(const TokenSeq& pred, const TokenSeq& ref) { return pred.ids == ref.ids; }

// Surface tokens for text-level similarity scoring; vocabulary-independent.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& piece : detail::scan_pieces(text)) out.push_back(piece.text);
  return out;
}

namespace metricdetail {

struct NgramKey {
  std::vector<std::string> grams;
  bool operator<(const NgramKey& o) const { return grams < o.grams; }
};

inline std::map<NgramKey, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                    std::size_t n) {
  std::map<NgramKey, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    NgramKey key;
    key.grams.assign(toks.begin() + static_cast<std::ptrdiff_t>(i),
                     toks.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[key];
  }
  return counts;
}

}  // namespace metricdetail

// Sentence-level BLEU-4: geometric mean of modified 1..4-gram precisions
// times the brevity penalty. Zero counts for n >= 2 get add-one smoothing;
// a zero unigram precision is reported as is.
inline double bleu4(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
  if (ref.empty()) throw InputError("bleu4: empty reference");
  if (pred.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto pred_counts = metricdetail::ngram_counts(pred, n);
    auto ref_counts = metricdetail::ngram_counts(ref, n);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, count] : pred_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    double p;
    if (n == 1) {
      p = total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
    } else if (matched == 0) {
      p = 1.0 / (static_cast<double>(total) + 1.0);
    } else {
      p = static_cast<double>(matched) / static_cast<double>(total);
    }
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p) / 4.0;
  }
  double bp = pred.size() >= ref.size()
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size()));
  return bp * std::exp(log_sum);
}

// Keyword-weighted variant of the n-gram match: every token contributes
// weight 1, keywords of the C subset contribute 4.
inline double weighted_ngram_match(const std::vector<std::string>& pred,
                                   const std::vector<std::string>& ref) {
  if (ref.empty() || pred.empty()) return 0.0;
  auto gram_weight = [](const metricdetail::NgramKey& key) {
    double w = 0.0;
    for (const auto& t : key.grams) w += c_keywords().count(t) ? 4.0 : 1.0;
    return w;
  };
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto pred_counts = metricdetail::ngram_counts(pred, n);
    auto ref_counts = metricdetail::ngram_counts(ref, n);
    double matched = 0.0, total = 0.0;
    for (const auto& [gram, count] : pred_counts) {
      double w = gram_weight(gram);
      total += w * static_cast<double>(count);
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += w * static_cast<double>(std::min(count, it->second));
    }
    double p;
    if (n == 1) {
      p = total == 0.0 ? 0.0 : matched / total;
    } else if (matched == 0.0) {
      p = 1.0 / (total + 1.0);
    } else {
      p = matched / total;
    }
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p) / 4.0;
  }
  double bp = pred.size() >= ref.size()
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size()));
  return bp * std::exp(log_sum);
}

// ---------------------------------------------------------------------------
// AST subtree match: multiset intersection of type-only subtree signatures.
// Values are ignored so consistent identifier renames score 1.
// ---------------------------------------------------------------------------

inline std::vector<std::string> ast_subtree_signatures(const AstNode& root) {
  // Post-order accumulation; each node contributes one signature built from
  // its children's signatures.
  struct Walker {
    std::vector<std::string> all;
    std::string walk(const AstNode& n) {
      std::string sig = "(" + n.node_type;
      for (const auto& c : n.children) {
        sig += " ";
        sig += walk(c);
      }
      sig += ")";
      all.push_back(sig);
      return sig;
    }
  } walker;
  walker.walk(root);
  return walker.all;
}

inline double ast_subtree_match(const AstNode& pred, const AstNode& ref) {
  auto pred_sigs = ast_subtree_signatures(pred);
  auto ref_sigs = ast_subtree_signatures(ref);
  std::unordered_map<std::string, std::size_t> pred_counts;
  for (auto& s : pred_sigs) ++pred_counts[s];
  std::size_t matched = 0;
  for (const auto& s : ref_sigs) {
    auto it = pred_counts.find(s);
    if (it != pred_counts.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(ref_sigs.size());
}

// ---------------------------------------------------------------------------
// Dataflow match: def-use events from assignment analysis. Identifiers are
// normalized by first appearance so renames do not affect the score;
// pointer aliasing is out of scope.
// ---------------------------------------------------------------------------

namespace metricdetail {

struct DefUseState {
  std::unordered_map<std::string, int> def_version;   // name -> assignments seen
  std::unordered_map<std::string, int> norm_index;    // name -> var_<k>
  std::vector<std::pair<std::string, int>> edges;     // (normalized name, version read)

  std::string norm(const std::string& name) {
    auto it = norm_index.find(name);
    if (it == norm_index.end()) {
      int idx = static_cast<int>(norm_index.size());
      it = norm_index.emplace(name, idx).first;
    }
    return "var_" + std::to_string(it->second);
  }

  void read(const std::string& name) {
    auto it = def_version.find(name);
    if (it == def_version.end()) return;  // read of an undefined name: no edge
    edges.emplace_back(norm(name), it->second);
  }

  void define(const std::string& name) {
    norm(name);
    ++def_version[name];
  }
};

inline void collect_reads(const AstNode& n, DefUseState& state) {
  if (n.node_type == "identifier") {
    state.read(n.value);
    return;
  }
  for (const auto& c : n.children) collect_reads(c, state);
}

inline const AstNode* declarator_name(const AstNode& n) {
  if (n.node_type == "identifier") return &n;
  for (const auto& c : n.children) {
    if (const AstNode* found = declarator_name(c)) return found;
  }
  return nullptr;
}

inline void walk_dataflow(const AstNode& n, DefUseState& state) {
  if (n.node_type == "assignment_expression" && n.children.size() == 2) {
    // Compound assignments read the left side first.
    if (n.value != "=") collect_reads(n.children[0], state);
    collect_reads(n.children[1], state);
    if (const AstNode* name = declarator_name(n.children[0])) state.define(name->value);
    return;
  }
  if (n.node_type == "init_declarator" && n.children.size() == 2) {
    collect_reads(n.children[1], state);
    if (const AstNode* name = declarator_name(n.children[0])) state.define(name->value);
    return;
  }
  if (n.node_type == "update_expression" && n.children.size() == 1) {
    collect_reads(n.children[0], state);
    if (const AstNode* name = declarator_name(n.children[0])) state.define(name->value);
    return;
  }
  if (n.node_type == "identifier") {
    state.read(n.value);
    return;
  }
  for (const auto& c : n.children) walk_dataflow(c, state);
}

}  // namespace metricdetail

inline std::vector<std::pair<std::string, int>> dataflow_edges(const AstNode& root) {
  metricdetail::DefUseState state;
  metricdetail::walk_dataflow(root, state);
  return state.edges;
}

inline double dataflow_match(const AstNode& pred, const AstNode& ref) {
  auto pred_edges = dataflow_edges(pred);
  auto ref_edges = dataflow_edges(ref);
  if (ref_edges.empty()) return 1.0;  // nothing to match against
  std::map<std::pair<std::string, int>, std::size_t> pred_counts;
  for (const auto& e : pred_edges) ++pred_counts[e];
  std::size_t matched = 0;
  for (const auto& e : ref_edges) {
    auto it = pred_counts.find(e);
    if (it != pred_counts.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(ref_edges.size());
}

// ---------------------------------------------------------------------------
// CodeBLEU
// ---------------------------------------------------------------------------

struct CodeBleuWeights {
  double ngram = 0.25;
  double weighted_ngram = 0.25;
  double subtree = 0.25;
  double dataflow = 0.25;
};

struct CodeBleuBreakdown {
  double ngram = 0.0;
  double weighted_ngram = 0.0;
  double subtree = 0.0;
  double dataflow = 0.0;
  double total = 0.0;
};

inline CodeBleuBreakdown codebleu_breakdown(std::string_view pred_text, std::string_view ref_text,
                                            const CodeBleuWeights& w = {}) {
  CodeBleuBreakdown b;
  auto pred_toks = word_tokens(pred_text);
  auto ref_toks = word_tokens(ref_text);
  if (ref_toks.empty() && pred_toks.empty()) {
    b.ngram = b.weighted_ngram = 1.0;
  } else if (ref_toks.empty() || pred_toks.empty()) {
    b.ngram = b.weighted_ngram = 0.0;
  } else {
    b.ngram = bleu4(pred_toks, ref_toks);
    b.weighted_ngram = weighted_ngram_match(pred_toks, ref_toks);
  }
  AstNode pred_tree = parse_source(pred_text);
  AstNode ref_tree = parse_source(ref_text);
  // A bare root on one side only means an empty prediction (or reference).
  if (pred_toks.empty() && !ref_toks.empty()) {
    b.subtree = 0.0;
    b.dataflow = 0.0;
  } else {
    b.subtree = ast_subtree_match(pred_tree, ref_tree);
    b.dataflow = dataflow_match(pred_tree, ref_tree);
  }
  b.total = w.ngram * b.ngram + w.weighted_ngram * b.weighted_ngram + w.subtree * b.subtree +
            w.dataflow * b.dataflow;
  return b;
}

inline double codebleu(std::string_view pred_text, std::string_view ref_text,
                       const CodeBleuWeights& w = {}) {
  return codebleu_breakdown(pred_text, ref_text, w).total;
}

}  // namespace fidfix
