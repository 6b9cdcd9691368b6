#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fidfix/common.hpp"

namespace fidfix {

// Tree node over a C-like subset. Structural nodes carry an empty value;
// expression nodes carry their operator token; leaves carry source tokens.
struct AstNode {
  std::string node_type;
  std::string value;
  std::vector<AstNode> children;

  bool is_leaf() const { return children.empty(); }
};

struct AstNodeSeq {
  std::vector<std::string> entries;
};

inline std::size_t node_count(const AstNode& n) {
  std::size_t total = 1;
  for (const auto& c : n.children) total += node_count(c);
  return total;
}

inline const std::unordered_set<std::string>& c_keywords() {
  static const std::unordered_set<std::string> kw = {
      "if",     "else",   "while",    "for",    "return", "break",  "continue", "do",
      "switch", "case",   "default",  "goto",   "int",    "char",   "float",    "double",
      "void",   "long",   "short",    "signed", "unsigned", "const", "static",  "struct",
      "union",  "enum",   "sizeof",   "typedef", "volatile", "extern", "register"};
  return kw;
}

inline bool is_type_keyword(std::string_view s) {
  static const std::unordered_set<std::string> kw = {"int",      "char",  "float", "double",
                                                     "void",     "long",  "short", "signed",
                                                     "unsigned", "const", "struct", "union",
                                                     "enum",     "static", "volatile"};
  return kw.count(std::string(s)) > 0;
}

namespace astdetail {

enum class Tok { identifier, keyword, number, string_lit, char_lit, punct, unknown, eof };

struct Token {
  Tok kind = Tok::eof;
  std::string text;
  std::size_t offset = 0;
};

inline bool ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
inline bool digit(char c) { return c >= '0' && c <= '9'; }
inline bool space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Lexes the full input. Comments count as whitespace; bytes no rule covers
// come out as maximal `unknown` runs so the parser can fold them into one
// ERROR leaf.
inline std::vector<Token> lex(std::string_view src) {
  static constexpr std::array<std::string_view, 19> multi = {
      "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==",
      "!=",  "&&",  "||", "+=", "-=", "*=", "/=", "%=", "&=",
  };
  static constexpr std::string_view singles = "+-*/%<>=!&|^~?:.,;()[]{}";
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (space(c)) {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
      std::size_t end = src.find("*/", i + 2);
      i = (end == std::string_view::npos) ? src.size() : end + 2;
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < src.size() && ident_char(src[j])) ++j;
      std::string text(src.substr(i, j - i));
      Tok kind = c_keywords().count(text) ? Tok::keyword : Tok::identifier;
      out.push_back({kind, std::move(text), i});
      i = j;
      continue;
    }
    if (digit(c) || (c == '.' && i + 1 < src.size() && digit(src[i + 1]))) {
      std::size_t j = i + 1;
      while (j < src.size() && (ident_char(src[j]) || src[j] == '.')) ++j;
      out.push_back({Tok::number, std::string(src.substr(i, j - i)), i});
      i = j;
      continue;
    }
    if (c == '"' || c == '\'') {
      char quote = c;
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != quote) {
        if (src[j] == '\\' && j + 1 < src.size()) ++j;
        ++j;
      }
      if (j < src.size()) ++j;
      out.push_back({quote == '"' ? Tok::string_lit : Tok::char_lit,
                     std::string(src.substr(i, j - i)), i});
      i = j;
      continue;
    }
    bool matched = false;
    for (auto m : multi) {
      if (src.substr(i, m.size()) == m) {
        out.push_back({Tok::punct, std::string(m), i});
        i += m.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (singles.find(c) != std::string_view::npos) {
      out.push_back({Tok::punct, std::string(1, c), i});
      ++i;
      continue;
    }
    // Maximal run of bytes outside the lexical grammar.
    std::size_t j = i;
    while (j < src.size() && !space(src[j]) && !ident_start(src[j]) && !digit(src[j]) &&
           src[j] != '"' && src[j] != '\'' && singles.find(src[j]) == std::string_view::npos) {
      ++j;
    }
    out.push_back({Tok::unknown, std::string(src.substr(i, j - i)), i});
    i = j;
  }
  out.push_back({Tok::eof, "", src.size()});
  return out;
}

// Recursive-descent parser. Never rejects: anything outside the subset is
// swept into ERROR leaves at the nearest sync point. Tokens consumed purely
// for structure (braces, keywords, semicolons) are recorded so tests can
// account for every input byte.
class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src), toks_(lex(src)) {}

  AstNode parse() {
    AstNode root{"translation_unit", "", {}};
    while (!at(Tok::eof)) {
      std::size_t before = pos_;
      root.children.push_back(parse_external());
      if (pos_ == before) {
        // Safety net: always make progress.
        root.children.push_back(error_node(pos_, pos_ + 1));
      }
    }
    return root;
  }

  const std::vector<std::string>& structural_tokens() const { return structural_; }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool at(Tok k) const { return cur().kind == k; }
  bool at_punct(std::string_view p) const { return cur().kind == Tok::punct && cur().text == p; }
  bool at_keyword(std::string_view k) const {
    return cur().kind == Tok::keyword && cur().text == k;
  }

  void advance() {
    if (!at(Tok::eof)) ++pos_;
  }

  void eat_structural() {
    structural_.push_back(cur().text);
    advance();
  }

  bool eat_punct(std::string_view p) {
    if (at_punct(p)) {
      eat_structural();
      return true;
    }
    return false;
  }

  // Consumes tokens [from, to) into a single ERROR leaf carrying the raw
  // source slice.
  AstNode error_node(std::size_t from, std::size_t to) {
    if (to > toks_.size() - 1) to = toks_.size() - 1;
    if (from >= to) {
      advance();
      return AstNode{"ERROR", "", {}};
    }
    std::size_t begin = toks_[from].offset;
    const Token& last = toks_[to - 1];
    std::size_t end = last.offset + last.text.size();
    pos_ = to;
    return AstNode{"ERROR", std::string(src_.substr(begin, end - begin)), {}};
  }

  // Skips to a statement boundary, returning one ERROR leaf for the span.
  AstNode error_to_sync(std::size_t from, bool consume_semi) {
    std::size_t to = from;
    while (to + 1 < toks_.size() && toks_[to].kind != Tok::eof) {
      const Token& t = toks_[to];
      if (t.kind == Tok::punct && (t.text == ";" || t.text == "}" || t.text == ")")) break;
      ++to;
    }
    AstNode err = error_node(from, to);
    if (consume_semi && at_punct(";")) eat_structural();
    return err;
  }

  AstNode parse_external() {
    if (at(Tok::keyword) && is_type_keyword(cur().text)) return parse_declaration_or_function();
    return parse_statement();
  }

  // type_spec: one or more type keywords folded into a single leaf.
  AstNode parse_type_spec() {
    std::string text;
    while (at(Tok::keyword) && is_type_keyword(cur().text)) {
      if (!text.empty()) text += ' ';
      text += cur().text;
      advance();
    }
    // struct/union/enum tag
    if (!text.empty() && at(Tok::identifier) &&
        (text.ends_with("struct") || text.ends_with("union") || text.ends_with("enum"))) {
      text += ' ';
      text += cur().text;
      advance();
    }
    return AstNode{"primitive_type", text, {}};
  }

  AstNode parse_declaration_or_function() {
    AstNode type = parse_type_spec();
    // Pointer stars before the name.
    std::vector<std::string> stars;
    while (at_punct("*")) {
      stars.push_back(cur().text);
      advance();
    }
    if (!at(Tok::identifier)) {
      AstNode decl{"declaration", "", {}};
      decl.children.push_back(std::move(type));
      decl.children.push_back(wrap_pointers(std::move(stars), error_to_sync(pos_, true)));
      return decl;
    }
    AstNode name{"identifier", cur().text, {}};
    advance();
    if (at_punct("(")) {
      return parse_function_rest(std::move(type), std::move(stars), std::move(name));
    }
    return parse_declaration_rest(std::move(type), std::move(stars), std::move(name));
  }

  AstNode wrap_pointers(std::vector<std::string> stars, AstNode inner) {
    for (std::size_t k = stars.size(); k-- > 0;) {
      AstNode p{"pointer_declarator", stars[k], {}};
      p.children.push_back(std::move(inner));
      inner = std::move(p);
    }
    return inner;
  }

  AstNode parse_function_rest(AstNode type, std::vector<std::string> stars, AstNode name) {
    AstNode fn{"function_definition", "", {}};
    fn.children.push_back(std::move(type));
    fn.children.push_back(wrap_pointers(std::move(stars), std::move(name)));
    eat_punct("(");
    AstNode params{"parameter_list", "", {}};
    while (!at_punct(")") && !at(Tok::eof)) {
      if (at(Tok::keyword) && is_type_keyword(cur().text)) {
        AstNode param{"parameter_declaration", "", {}};
        AstNode ptype = parse_type_spec();
        std::vector<std::string> pstars;
        while (at_punct("*")) {
          pstars.push_back(cur().text);
          advance();
        }
        param.children.push_back(std::move(ptype));
        if (at(Tok::identifier)) {
          AstNode pname{"identifier", cur().text, {}};
          advance();
          param.children.push_back(wrap_pointers(std::move(pstars), std::move(pname)));
        } else if (!pstars.empty()) {
          param.children.push_back(wrap_pointers(std::move(pstars), AstNode{"abstract_declarator", "", {}}));
        }
        params.children.push_back(std::move(param));
      } else {
        params.children.push_back(error_node(pos_, pos_ + 1));
      }
      if (!eat_punct(",") && !at_punct(")")) break;
    }
    eat_punct(")");
    fn.children.push_back(std::move(params));
    if (at_punct("{")) {
      fn.children.push_back(parse_compound());
    } else if (eat_punct(";")) {
      // Declaration without body; keep the shape, body absent.
    } else {
      fn.children.push_back(error_to_sync(pos_, true));
    }
    return fn;
  }

  AstNode parse_declaration_rest(AstNode type, std::vector<std::string> stars, AstNode name) {
    AstNode decl{"declaration", "", {}};
    decl.children.push_back(std::move(type));
    bool first = true;
    AstNode pending = wrap_pointers(std::move(stars), std::move(name));
    while (true) {
      if (!first) {
        std::vector<std::string> more_stars;
        while (at_punct("*")) {
          more_stars.push_back(cur().text);
          advance();
        }
        if (!at(Tok::identifier)) {
          decl.children.push_back(wrap_pointers(std::move(more_stars), error_to_sync(pos_, true)));
          return decl;
        }
        pending = wrap_pointers(std::move(more_stars), AstNode{"identifier", cur().text, {}});
        advance();
      }
      first = false;
      // Array suffixes.
      while (at_punct("[")) {
        eat_structural();
        AstNode arr{"array_declarator", "", {}};
        arr.children.push_back(std::move(pending));
        if (!at_punct("]")) arr.children.push_back(parse_expression());
        eat_punct("]");
        pending = std::move(arr);
      }
      if (at_punct("=")) {
        AstNode init{"init_declarator", "", {}};
        init.children.push_back(std::move(pending));
        eat_structural();
        init.children.push_back(parse_expression());
        decl.children.push_back(std::move(init));
      } else {
        decl.children.push_back(std::move(pending));
      }
      if (eat_punct(",")) continue;
      break;
    }
    if (!eat_punct(";")) {
      if (!at(Tok::eof) && !at_punct("}")) decl.children.push_back(error_to_sync(pos_, true));
    }
    return decl;
  }

  AstNode parse_compound() {
    AstNode block{"compound_statement", "", {}};
    eat_punct("{");
    while (!at_punct("}") && !at(Tok::eof)) {
      std::size_t before = pos_;
      block.children.push_back(parse_statement());
      if (pos_ == before) block.children.push_back(error_node(pos_, pos_ + 1));
    }
    eat_punct("}");
    return block;
  }

  AstNode parse_statement() {
    if (at_punct("{")) return parse_compound();
    if (at_keyword("if")) return parse_if();
    if (at_keyword("while")) return parse_while();
    if (at_keyword("for")) return parse_for();
    if (at_keyword("return")) {
      eat_structural();
      AstNode ret{"return_statement", "", {}};
      if (!at_punct(";")) ret.children.push_back(parse_expression());
      if (!eat_punct(";")) {
        if (!at_punct("}") && !at(Tok::eof)) ret.children.push_back(error_to_sync(pos_, true));
      }
      return ret;
    }
    if (at_keyword("break") || at_keyword("continue")) {
      AstNode stmt{cur().text + "_statement", "", {}};
      eat_structural();
      eat_punct(";");
      return stmt;
    }
    if (at(Tok::keyword) && is_type_keyword(cur().text)) return parse_declaration_or_function();
    if (at_punct(";")) {
      eat_structural();
      return AstNode{"empty_statement", "", {}};
    }
    if (at(Tok::unknown) || at(Tok::keyword)) {
      // Keywords with no production here (switch, goto, ...) and stray bytes.
      return error_to_sync(pos_, true);
    }
    AstNode stmt{"expression_statement", "", {}};
    stmt.children.push_back(parse_expression());
    if (!eat_punct(";")) {
      if (!at_punct("}") && !at(Tok::eof)) stmt.children.push_back(error_to_sync(pos_, true));
    }
    return stmt;
  }

  AstNode parse_if() {
    AstNode node{"if_statement", "", {}};
    eat_structural();  // if
    eat_punct("(");
    node.children.push_back(parse_expression());
    eat_punct(")");
    node.children.push_back(parse_statement());
    if (at_keyword("else")) {
      eat_structural();
      node.children.push_back(parse_statement());
    }
    return node;
  }

  AstNode parse_while() {
    AstNode node{"while_statement", "", {}};
    eat_structural();  // while
    eat_punct("(");
    node.children.push_back(parse_expression());
    eat_punct(")");
    node.children.push_back(parse_statement());
    return node;
  }

  AstNode parse_for() {
    AstNode node{"for_statement", "", {}};
    eat_structural();  // for
    eat_punct("(");
    if (at(Tok::keyword) && is_type_keyword(cur().text)) {
      node.children.push_back(parse_declaration_or_function());
    } else if (!eat_punct(";")) {
      AstNode init{"expression_statement", "", {}};
      init.children.push_back(parse_expression());
      eat_punct(";");
      node.children.push_back(std::move(init));
    }
    if (!at_punct(";")) node.children.push_back(parse_expression());
    eat_punct(";");
    if (!at_punct(")")) node.children.push_back(parse_expression());
    eat_punct(")");
    node.children.push_back(parse_statement());
    return node;
  }

  // Expressions: precedence climbing over the usual C binary operators.
  AstNode parse_expression() { return parse_assignment(); }

  AstNode parse_assignment() {
    AstNode lhs = parse_ternary();
    static const std::unordered_set<std::string> assign_ops = {
        "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="};
    if (at(Tok::punct) && assign_ops.count(cur().text)) {
      AstNode node{"assignment_expression", cur().text, {}};
      advance();
      node.children.push_back(std::move(lhs));
      node.children.push_back(parse_assignment());
      return node;
    }
    return lhs;
  }

  AstNode parse_ternary() {
    AstNode cond = parse_binary(0);
    if (at_punct("?")) {
      AstNode node{"conditional_expression", "?", {}};
      advance();
      node.children.push_back(std::move(cond));
      node.children.push_back(parse_expression());
      eat_punct(":");
      node.children.push_back(parse_ternary());
      return node;
    }
    return cond;
  }

  static int binary_level(const std::string& op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "|") return 3;
    if (op == "^") return 4;
    if (op == "&") return 5;
    if (op == "==" || op == "!=") return 6;
    if (op == "<" || op == ">" || op == "<=" || op == ">=") return 7;
    if (op == "<<" || op == ">>") return 8;
    if (op == "+" || op == "-") return 9;
    if (op == "*" || op == "/" || op == "%") return 10;
    return 0;
  }

  AstNode parse_binary(int min_level) {
    AstNode lhs = parse_unary();
    while (at(Tok::punct)) {
      int level = binary_level(cur().text);
      if (level == 0 || level < min_level) break;
      AstNode node{"binary_expression", cur().text, {}};
      advance();
      node.children.push_back(std::move(lhs));
      node.children.push_back(parse_binary(level + 1));
      lhs = std::move(node);
    }
    return lhs;
  }

  AstNode parse_unary() {
    static const std::unordered_set<std::string> unary_ops = {"!", "~", "-", "+",
                                                              "*", "&", "++", "--"};
    if (at(Tok::punct) && unary_ops.count(cur().text)) {
      AstNode node{"unary_expression", cur().text, {}};
      advance();
      node.children.push_back(parse_unary());
      return node;
    }
    if (at_keyword("sizeof")) {
      AstNode node{"unary_expression", "sizeof", {}};
      advance();
      node.children.push_back(parse_unary());
      return node;
    }
    return parse_postfix();
  }

  AstNode parse_postfix() {
    AstNode expr = parse_primary();
    while (true) {
      if (at_punct("(")) {
        eat_structural();
        AstNode call{"call_expression", "", {}};
        call.children.push_back(std::move(expr));
        AstNode args{"argument_list", "", {}};
        while (!at_punct(")") && !at(Tok::eof)) {
          args.children.push_back(parse_expression());
          if (!eat_punct(",")) break;
        }
        eat_punct(")");
        call.children.push_back(std::move(args));
        expr = std::move(call);
      } else if (at_punct("[")) {
        eat_structural();
        AstNode sub{"subscript_expression", "", {}};
        sub.children.push_back(std::move(expr));
        sub.children.push_back(parse_expression());
        eat_punct("]");
        expr = std::move(sub);
      } else if (at_punct(".") || at_punct("->")) {
        AstNode field{"field_expression", cur().text, {}};
        advance();
        field.children.push_back(std::move(expr));
        if (at(Tok::identifier)) {
          field.children.push_back(AstNode{"identifier", cur().text, {}});
          advance();
        }
        expr = std::move(field);
      } else if (at_punct("++") || at_punct("--")) {
        AstNode upd{"update_expression", cur().text, {}};
        advance();
        upd.children.push_back(std::move(expr));
        expr = std::move(upd);
      } else {
        break;
      }
    }
    return expr;
  }

  AstNode parse_primary() {
    switch (cur().kind) {
      case Tok::identifier: {
        AstNode node{"identifier", cur().text, {}};
        advance();
        return node;
      }
      case Tok::number: {
        AstNode node{"number_literal", cur().text, {}};
        advance();
        return node;
      }
      case Tok::string_lit: {
        AstNode node{"string_literal", cur().text, {}};
        advance();
        return node;
      }
      case Tok::char_lit: {
        AstNode node{"char_literal", cur().text, {}};
        advance();
        return node;
      }
      default:
        break;
    }
    if (at_punct("(")) {
      eat_structural();
      AstNode node{"parenthesized_expression", "", {}};
      node.children.push_back(parse_expression());
      eat_punct(")");
      return node;
    }
    // Unparseable span: gather up to the nearest expression boundary.
    std::size_t from = pos_;
    std::size_t to = from;
    while (toks_[to].kind != Tok::eof) {
      const Token& t = toks_[to];
      if (t.kind == Tok::punct &&
          (t.text == ";" || t.text == ")" || t.text == "," || t.text == "}" || t.text == "]")) {
        break;
      }
      ++to;
      if (toks_[to - 1].kind != Tok::unknown) break;
    }
    if (to == from) to = from + 1;
    return error_node(from, to);
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<std::string> structural_;
};

}  // namespace astdetail

struct ParseResult {
  AstNode root;
  // Tokens consumed by structure alone (punctuation, statement keywords);
  // together with node values they cover the whole input.
  std::vector<std::string> structural_tokens;
};

inline ParseResult parse_source_full(std::string_view text) {
  astdetail::Parser p(text);
  ParseResult r;
  r.root = p.parse();
  r.structural_tokens = p.structural_tokens();
  return r;
}

// Error-tolerant parse of a C-like source fragment. Total: every input maps
// to a tree rooted at translation_unit.
inline AstNode parse_source(std::string_view text) { return parse_source_full(text).root; }

// Preorder linearization: each entry is value + ' ' + type, root before
// descendants, children left to right.
inline void linearize_into(const AstNode& n, AstNodeSeq& seq) {
  seq.entries.push_back(n.value + " " + n.node_type);
  for (const auto& c : n.children) linearize_into(c, seq);
}

inline AstNodeSeq linearize_dfs(const AstNode& root) {
  AstNodeSeq seq;
  seq.entries.reserve(node_count(root));
  linearize_into(root, seq);
  return seq;
}

// ---------------------------------------------------------------------------
// External tree ingestion: nested S-expressions `(type "value" child*)`.
// ---------------------------------------------------------------------------

namespace astdetail {

class SexprParser {
 public:
  explicit SexprParser(std::string_view text) : text_(text) {}

  AstNode parse() {
    skip_ws();
    AstNode root = parse_node();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing content after tree");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw InputError("sexpr parse error at offset " + std::to_string(pos_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && space(text_[pos_])) ++pos_;
  }

  AstNode parse_node() {
    if (pos_ >= text_.size() || text_[pos_] != '(') fail("expected '('");
    ++pos_;
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && !space(text_[pos_]) && text_[pos_] != '(' &&
           text_[pos_] != ')' && text_[pos_] != '"') {
      ++pos_;
    }
    if (pos_ == start) fail("expected node type");
    AstNode node;
    node.node_type = std::string(text_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '"') node.value = parse_string();
    skip_ws();
    while (pos_ < text_.size() && text_[pos_] == '(') {
      node.children.push_back(parse_node());
      skip_ws();
    }
    if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
    ++pos_;
    return node;
  }

  std::string parse_string() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_];
      if (c == '\\' && pos_ + 1 < text_.size()) {
        ++pos_;
        char e = text_[pos_];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: out += e; break;
        }
      } else {
        out += c;
      }
      ++pos_;
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;  // closing quote
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace astdetail

inline AstNode parse_sexpr_tree(std::string_view text) {
  return astdetail::SexprParser(text).parse();
}

inline void write_sexpr_into(const AstNode& n, std::string& out) {
  out += '(';
  out += n.node_type;
  out += " \"";
  for (char c : n.value) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      default: out += c; break;
    }
  }
  out += '"';
  for (const auto& c : n.children) {
    out += ' ';
    write_sexpr_into(c, out);
  }
  out += ')';
}

inline std::string write_sexpr(const AstNode& root) {
  std::string out;
  write_sexpr_into(root, out);
  return out;
}

}  // namespace fidfix
