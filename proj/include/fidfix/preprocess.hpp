#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fidfix/common.hpp"

namespace fidfix {

// Reserved vocabulary layout. Ids 0-3 are pad/bos/eos/unk, 4-7 the four
// localization tokens, 8 the AST entry boundary, 9-264 single-byte fallback
// tokens. Learned tokens start at kFirstLearnedId.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kStartLocId = 4;
inline constexpr int kEndLocId = 5;
inline constexpr int kModStartId = 6;
inline constexpr int kModEndId = 7;
inline constexpr int kNodeSepId = 8;
inline constexpr int kFirstByteId = 9;
inline constexpr int kFirstLearnedId = kFirstByteId + 256;

inline constexpr std::string_view kStartLoc = "<StartLoc>";
inline constexpr std::string_view kEndLoc = "<EndLoc>";
inline constexpr std::string_view kModStart = "<ModStart>";
inline constexpr std::string_view kModEnd = "<ModEnd>";
inline constexpr std::string_view kNodeSep = "<NODE>";

enum class Provenance { code, ast, knowledge };

struct TokenSeq {
  std::vector<int> ids;
  Provenance provenance = Provenance::code;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq& o) const { return ids == o.ids; }
};

enum class SegmentKind { code, ast, cwe_name, example_pair };

struct Segment {
  std::vector<int> tokens;
  int index = 0;
  SegmentKind kind = SegmentKind::code;

  std::size_t size() const { return tokens.size(); }
};

namespace detail {

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

inline bool is_space_char(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_punct_char(char c) {
  return c > 0x20 && c < 0x7F && !is_word_char(c);
}

inline std::string byte_token_name(unsigned char b) {
  static const char* digits = "0123456789ABCDEF";
  std::string s = "<0x00>";
  s[3] = digits[b >> 4];
  s[4] = digits[b & 0xF];
  return s;
}

// Splits text into surface tokens: identifier/number runs, single punctuation
// characters, and the five atomic markers. Whitespace separates and is
// dropped; other bytes come through one at a time.
struct Piece {
  std::string text;
  enum Kind { word, punct, marker, raw_byte } kind;
};

inline std::vector<Piece> scan_pieces(std::string_view text) {
  static constexpr std::array<std::string_view, 5> markers = {kStartLoc, kEndLoc, kModStart,
                                                              kModEnd, kNodeSep};
  std::vector<Piece> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (is_space_char(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (auto m : markers) {
        if (text.substr(i, m.size()) == m) {
          out.push_back({std::string(m), Piece::marker});
          i += m.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_word_char(text[j])) ++j;
      out.push_back({std::string(text.substr(i, j - i)), Piece::word});
      i = j;
      continue;
    }
    if (is_punct_char(c)) {
      out.push_back({std::string(1, c), Piece::punct});
      ++i;
      continue;
    }
    out.push_back({std::string(1, c), Piece::raw_byte});
    ++i;
  }
  return out;
}

}  // namespace detail

// Word-level vocabulary with byte fallback. The on-disk format is one token
// per line; the line number is the id.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary from_tokens(std::vector<std::string> learned) {
    Vocabulary v;
    v.id2tok_ = reserved_tokens();
    for (auto& t : learned) v.id2tok_.push_back(std::move(t));
    v.rebuild_index();
    return v;
  }

  static Vocabulary load(const std::string& path) {
    Vocabulary v;
    std::string content = read_file(path);
    v.id2tok_ = split_lines(content);
    const auto reserved = reserved_tokens();
    if (v.id2tok_.size() < reserved.size()) {
      throw InputError("vocabulary file too short: " + path);
    }
    for (std::size_t i = 0; i < reserved.size(); ++i) {
      if (v.id2tok_[i] != reserved[i]) {
        throw InputError("vocabulary file " + path + ": reserved slot " + std::to_string(i) +
                         " holds '" + v.id2tok_[i] + "', expected '" + reserved[i] + "'");
      }
    }
    v.rebuild_index();
    return v;
  }

  void save(const std::string& path) const {
    std::string out;
    for (const auto& t : id2tok_) {
      out += t;
      out += '\n';
    }
    write_file(path, out);
  }

  int size() const { return static_cast<int>(id2tok_.size()); }

  const std::string& token(int id) const {
    static const std::string unk = "<unk>";
    if (id < 0 || id >= size()) return unk;
    return id2tok_[static_cast<std::size_t>(id)];
  }

  // -1 when the token is not in the vocabulary.
  int id_of(std::string_view tok) const {
    auto it = tok2id_.find(std::string(tok));
    return it == tok2id_.end() ? -1 : it->second;
  }

  static int byte_id(unsigned char b) { return kFirstByteId + b; }
  static bool is_byte_id(int id) { return id >= kFirstByteId && id < kFirstLearnedId; }

 private:
  static std::vector<std::string> reserved_tokens() {
    std::vector<std::string> toks = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (auto m : {kStartLoc, kEndLoc, kModStart, kModEnd, kNodeSep}) toks.emplace_back(m);
    for (int b = 0; b < 256; ++b) toks.push_back(detail::byte_token_name(static_cast<unsigned char>(b)));
    return toks;
  }

  void rebuild_index() {
    tok2id_.clear();
    for (std::size_t i = 0; i < id2tok_.size(); ++i) tok2id_.emplace(id2tok_[i], static_cast<int>(i));
  }

  std::vector<std::string> id2tok_;
  std::unordered_map<std::string, int> tok2id_;
};

// Frequency-ranked vocabulary construction. Ties break lexicographically so
// the result is independent of input order.
inline Vocabulary build_vocabulary(const std::vector<std::string>& texts, std::size_t max_learned) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& text : texts) {
    for (const auto& piece : detail::scan_pieces(text)) {
      if (piece.kind == detail::Piece::word || piece.kind == detail::Piece::punct) {
        ++counts[piece.text];
      }
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_learned) ranked.resize(max_learned);
  std::vector<std::string> learned;
  learned.reserve(ranked.size());
  for (auto& entry : ranked) learned.push_back(std::move(entry.first));
  return Vocabulary::from_tokens(std::move(learned));
}

// Deterministic tokenization: words and punctuation by vocabulary lookup,
// atomic markers by reserved id, anything out of vocabulary as single-byte
// fallback tokens. Total: no input can fail.
inline TokenSeq tokenize(std::string_view text, const Vocabulary& vocab,
                         Provenance prov = Provenance::code) {
  TokenSeq seq;
  seq.provenance = prov;
  for (const auto& piece : detail::scan_pieces(text)) {
    if (piece.kind == detail::Piece::raw_byte) {
      seq.ids.push_back(Vocabulary::byte_id(static_cast<unsigned char>(piece.text[0])));
      continue;
    }
    int id = vocab.id_of(piece.text);
    if (id >= 0) {
      seq.ids.push_back(id);
    } else {
      for (char c : piece.text) seq.ids.push_back(Vocabulary::byte_id(static_cast<unsigned char>(c)));
    }
  }
  return seq;
}

// Inverse of tokenize up to whitespace normalization: tokens join with single
// spaces, byte-fallback runs join without internal spaces.
inline std::string detokenize(const TokenSeq& seq, const Vocabulary& vocab) {
  std::string out;
  bool prev_byte = false;
  for (int id : seq.ids) {
    bool is_byte = Vocabulary::is_byte_id(id);
    if (!out.empty() && !(prev_byte && is_byte)) out += ' ';
    if (is_byte) {
      out += static_cast<char>(id - kFirstByteId);
    } else {
      out += vocab.token(id);
    }
    prev_byte = is_byte;
  }
  return out;
}

// Disjoint windows of at most `budget` tokens, preserving order. An empty
// sequence still yields one (empty) segment so every sample occupies a slot.
inline std::vector<Segment> segment_tokens(const TokenSeq& seq, std::size_t budget,
                                           SegmentKind kind = SegmentKind::code) {
  if (budget < 1) throw InputError("segment budget must be >= 1");
  std::vector<Segment> out;
  if (seq.ids.empty()) {
    out.push_back(Segment{{}, 0, kind});
    return out;
  }
  for (std::size_t start = 0; start < seq.ids.size(); start += budget) {
    std::size_t end = std::min(seq.ids.size(), start + budget);
    Segment s;
    s.tokens.assign(seq.ids.begin() + static_cast<std::ptrdiff_t>(start),
                    seq.ids.begin() + static_cast<std::ptrdiff_t>(end));
    s.index = static_cast<int>(out.size());
    s.kind = kind;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fidfix
