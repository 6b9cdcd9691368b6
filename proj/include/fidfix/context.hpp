#pragma once

#include <string>
#include <vector>

#include "fidfix/ast.hpp"
#include "fidfix/common.hpp"
#include "fidfix/corpus.hpp"
#include "fidfix/cwe_kb.hpp"
#include "fidfix/preprocess.hpp"

namespace fidfix {

// Fully assembled model input: code segments I, AST segments A, the CWE name
// D, and labeled example/fix pair segments E, plus the annotated target.
struct ContextBundle {
  std::vector<Segment> code_segments;
  std::vector<Segment> ast_segments;
  Segment name_segment{{}, 0, SegmentKind::cwe_name};
  std::vector<Segment> pair_segments;
  std::vector<int> pair_labels;  // aligned 1:1 with pair_segments
  TokenSeq target_tokens;

  // Slots in fusion order I; A; D; E.
  std::vector<const Segment*> slots() const {
    std::vector<const Segment*> out;
    out.reserve(code_segments.size() + ast_segments.size() + 1 + pair_segments.size());
    for (const auto& s : code_segments) out.push_back(&s);
    for (const auto& s : ast_segments) out.push_back(&s);
    out.push_back(&name_segment);
    for (const auto& s : pair_segments) out.push_back(&s);
    return out;
  }

  std::size_t slot_count() const {
    return code_segments.size() + ast_segments.size() + 1 + pair_segments.size();
  }
};

// Token stream for an AST: entries tokenized individually and joined with
// the <NODE> boundary token so entry edges survive segmentation.
inline TokenSeq ast_token_stream(const AstNodeSeq& seq, const Vocabulary& vocab) {
  TokenSeq out;
  out.provenance = Provenance::ast;
  for (std::size_t i = 0; i < seq.entries.size(); ++i) {
    if (i) out.ids.push_back(kNodeSepId);
    TokenSeq entry = tokenize(seq.entries[i], vocab, Provenance::ast);
    out.ids.insert(out.ids.end(), entry.ids.begin(), entry.ids.end());
  }
  return out;
}

namespace contextdetail {

inline Segment truncated_segment(const TokenSeq& seq, int budget, SegmentKind kind) {
  Segment s;
  s.kind = kind;
  s.index = 0;
  std::size_t n = std::min(seq.ids.size(), static_cast<std::size_t>(budget));
  s.tokens.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n));
  return s;
}

// Drops one slot according to the budget policy; returns false when nothing
// further may be dropped.
inline bool drop_one(ContextBundle& b) {
  // Trailing label-0 pairs go first.
  for (std::size_t k = b.pair_segments.size(); k-- > 0;) {
    if (b.pair_labels[k] == 0) {
      b.pair_segments.erase(b.pair_segments.begin() + static_cast<std::ptrdiff_t>(k));
      b.pair_labels.erase(b.pair_labels.begin() + static_cast<std::ptrdiff_t>(k));
      return true;
    }
  }
  if (!b.ast_segments.empty()) {
    b.ast_segments.pop_back();
    return true;
  }
  if (!b.pair_segments.empty()) {
    b.pair_segments.pop_back();
    b.pair_labels.pop_back();
    return true;
  }
  if (b.code_segments.size() > 1 ||
      (b.code_segments.size() == 1 && b.code_segments[0].tokens.empty())) {
    b.code_segments.pop_back();
    return true;
  }
  return false;
}

}  // namespace contextdetail

// Assembles the encoder input for one sample under the slot budget K. When
// the four groups exceed K slots, trailing label-0 pairs are dropped first,
// then trailing AST segments, then trailing label-1 pairs, then trailing
// code segments; the name slot is never dropped.
inline ContextBundle build_context(const RepairSample& sample, const KnowledgeBundle& kb_bundle,
                                   const Vocabulary& vocab, int max_segments, int segment_len,
                                   const AstNode* external_tree = nullptr) {
  auto [annotated_source, annotated_target] = annotate_sample(sample);
  TokenSeq code = tokenize(annotated_source, vocab, Provenance::code);
  if (max_segments < 2 && !code.empty()) {
    throw InputError("segment budget K=" + std::to_string(max_segments) +
                     " cannot hold code and the CWE name");
  }

  ContextBundle bundle;
  bundle.code_segments =
      segment_tokens(code, static_cast<std::size_t>(segment_len), SegmentKind::code);

  AstNode parsed;
  const AstNode* tree = external_tree;
  if (tree == nullptr) {
    parsed = parse_source(sample.source_fn);
    tree = &parsed;
  }
  TokenSeq ast_tokens = ast_token_stream(linearize_dfs(*tree), vocab);
  bundle.ast_segments =
      segment_tokens(ast_tokens, static_cast<std::size_t>(segment_len), SegmentKind::ast);

  TokenSeq name = tokenize(kb_bundle.cwe_name, vocab, Provenance::knowledge);
  bundle.name_segment = contextdetail::truncated_segment(name, segment_len, SegmentKind::cwe_name);

  for (const auto& pair : kb_bundle.pairs) {
    TokenSeq toks =
        tokenize(pair.example_code + " " + pair.fix_code, vocab, Provenance::knowledge);
    bundle.pair_segments.push_back(
        contextdetail::truncated_segment(toks, segment_len, SegmentKind::example_pair));
    bundle.pair_labels.push_back(pair.label);
  }

  while (bundle.slot_count() > static_cast<std::size_t>(max_segments)) {
    if (!contextdetail::drop_one(bundle)) break;
  }

  bundle.target_tokens = tokenize(annotated_target, vocab, Provenance::code);
  return bundle;
}

}  // namespace fidfix
