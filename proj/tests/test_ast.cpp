#include <catch2/catch.hpp>

#include <random>

#include "fidfix/ast.hpp"
#include "fidfix/preprocess.hpp"

using namespace fidfix;

namespace {

// Independent preorder walker used as the linearization oracle.
void oracle_preorder(const AstNode& n, std::vector<std::string>& out) {
  out.push_back(n.value + " " + n.node_type);
  for (const auto& c : n.children) oracle_preorder(c, out);
}

std::size_t count_error_nodes(const AstNode& n) {
  std::size_t total = n.node_type == "ERROR" ? 1 : 0;
  for (const auto& c : n.children) total += count_error_nodes(c);
  return total;
}

void collect_values(const AstNode& n, std::string& out) {
  out += n.value;
  for (const auto& c : n.children) collect_values(c, out);
}

std::string strip_ws(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!detail::is_space_char(c)) out += c;
  }
  return out;
}

AstNode random_tree(std::mt19937_64& rng, int depth) {
  static const char* types[] = {"alpha", "beta", "gamma", "delta"};
  static const char* values[] = {"", "x", "y", "42"};
  AstNode n;
  n.node_type = types[rng() % 4];
  n.value = values[rng() % 4];
  if (depth > 0) {
    std::size_t kids = rng() % 4;
    for (std::size_t i = 0; i < kids; ++i) n.children.push_back(random_tree(rng, depth - 1));
  }
  return n;
}

}  // namespace

TEST_CASE("parse_source builds the expected shape for a declaration") {
  AstNode root = parse_source("int x;");
  REQUIRE(root.node_type == "translation_unit");
  REQUIRE(root.children.size() == 1);
  const AstNode& decl = root.children[0];
  CHECK(decl.node_type == "declaration");
  REQUIRE(decl.children.size() == 2);
  CHECK(decl.children[0].node_type == "primitive_type");
  CHECK(decl.children[0].value == "int");
  CHECK(decl.children[1].node_type == "identifier");
  CHECK(decl.children[1].value == "x");
  CHECK(node_count(root) == 4);
}

TEST_CASE("parse_source of empty input is a bare translation unit") {
  AstNode root = parse_source("");
  CHECK(root.node_type == "translation_unit");
  CHECK(root.children.empty());
}

TEST_CASE("unparseable spans become a single ERROR leaf") {
  AstNode root = parse_source("int x = @@;");
  CHECK(count_error_nodes(root) == 1);
  // The leaf carries the raw text.
  bool found = false;
  std::function<void(const AstNode&)> walk = [&](const AstNode& n) {
    if (n.node_type == "ERROR" && n.value == "@@") found = true;
    for (const auto& c : n.children) walk(c);
  };
  walk(root);
  CHECK(found);
}

TEST_CASE("parse_source is total and deterministic on arbitrary bytes") {
  std::mt19937_64 rng(7777);
  for (int iter = 0; iter < 60; ++iter) {
    std::string junk;
    std::size_t n = rng() % 200;
    for (std::size_t i = 0; i < n; ++i) junk += static_cast<char>(rng() % 256);
    AstNode a = parse_source(junk);
    AstNode b = parse_source(junk);
    CHECK(write_sexpr(a) == write_sexpr(b));
    CHECK(a.node_type == "translation_unit");
  }
}

TEST_CASE("byte coverage: node values plus structural tokens equal the input") {
  const char* fixtures[] = {
      "int x;",
      "int foo(int a, char *b) { if (a > 0) { return a + b[0]; } return 0; }",
      "for (int i = 0; i < n; i++) { total += arr[i]; }",
      "while (x != 0) { x = x - 1; }",
      "unsigned long v = sizeof(x) + 0x1F; s->field = v; t.member++;",
      "int x = @@; char c = 'q'; char *s = \"str\\n\";",
  };
  for (const char* src : fixtures) {
    ParseResult r = parse_source_full(src);
    std::string covered;
    collect_values(r.root, covered);
    for (const auto& t : r.structural_tokens) covered += t;
    std::string full;
    for (const auto& tok : astdetail::lex(src)) full += tok.text;
    REQUIRE(strip_ws(covered).size() == strip_ws(full).size());
  }
}

TEST_CASE("linearize_dfs emits value-space-type entries in preorder") {
  AstNode single{"T", "v", {}};
  auto seq = linearize_dfs(single);
  REQUIRE(seq.entries.size() == 1);
  CHECK(seq.entries[0] == "v T");

  AstNode c3{"t3", "c3", {}};
  AstNode c1{"t1", "c1", {c3}};
  AstNode c2{"t2", "c2", {}};
  AstNode root{"root_t", "r", {c1, c2}};
  auto order = linearize_dfs(root);
  REQUIRE(order.entries.size() == 4);
  CHECK(order.entries[0] == "r root_t");
  CHECK(order.entries[1] == "c1 t1");
  CHECK(order.entries[2] == "c3 t3");
  CHECK(order.entries[3] == "c2 t2");
}

TEST_CASE("linearize_dfs matches an independent preorder oracle on random trees") {
  std::mt19937_64 rng(31337);
  for (int iter = 0; iter < 50; ++iter) {
    AstNode tree = random_tree(rng, 4);
    std::vector<std::string> expected;
    oracle_preorder(tree, expected);
    auto got = linearize_dfs(tree);
    REQUIRE(got.entries == expected);
    REQUIRE(got.entries.size() == node_count(tree));
  }
}

TEST_CASE("sexpr ingestion round-trips trees") {
  AstNode tree = parse_source("int foo(int a) { return a + 1; }");
  std::string text = write_sexpr(tree);
  AstNode back = parse_sexpr_tree(text);
  CHECK(write_sexpr(back) == text);
  CHECK(linearize_dfs(back).entries == linearize_dfs(tree).entries);
}

TEST_CASE("sexpr parser handles escapes and rejects malformed input") {
  AstNode n = parse_sexpr_tree(R"((leaf "a\"b\nc"))");
  CHECK(n.node_type == "leaf");
  CHECK(n.value == "a\"b\nc");

  CHECK_THROWS_AS(parse_sexpr_tree("(unclosed \"x\""), InputError);
  CHECK_THROWS_AS(parse_sexpr_tree("no parens"), InputError);
  CHECK_THROWS_AS(parse_sexpr_tree("(a \"v\") trailing"), InputError);
}
