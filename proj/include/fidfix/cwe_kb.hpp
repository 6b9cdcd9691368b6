#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fidfix/common.hpp"
#include "fidfix/corpus.hpp"

namespace fidfix {

struct CweExample {
  std::string code;
  std::string language;
  std::string analysis;
};

struct CweEntry {
  std::string id;
  std::string name;
  std::vector<std::string> parents;
  std::vector<CweExample> examples;
  // Either empty (no generation yet) or aligned 1:1 with examples.
  std::vector<std::string> fixes;
  std::size_t load_index = 0;

  bool has_fixes() const { return !examples.empty() && fixes.size() == examples.size(); }
};

using CweKb = std::map<std::string, CweEntry>;

// Parent edges over CWE ids; multiple parents allowed, cycles are not.
class CweHierarchy {
 public:
  void add_edge(const std::string& child, const std::string& parent) {
    parents_[child].push_back(parent);
    children_[parent].push_back(child);
    nodes_.insert(child);
    nodes_.insert(parent);
  }

  void add_node(const std::string& id) { nodes_.insert(id); }

  bool contains(const std::string& id) const { return nodes_.count(id) > 0; }

  std::vector<std::string> parents(const std::string& id) const {
    auto it = parents_.find(id);
    return it == parents_.end() ? std::vector<std::string>{} : it->second;
  }

  std::vector<std::string> children(const std::string& id) const {
    auto it = children_.find(id);
    return it == children_.end() ? std::vector<std::string>{} : it->second;
  }

  // Other children of any parent, excluding the node itself.
  std::vector<std::string> siblings(const std::string& id) const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& p : parents(id)) {
      for (const auto& c : children(p)) {
        if (c != id && seen.insert(c).second) out.push_back(c);
      }
    }
    return out;
  }

  // Throws when any node can reach itself, naming the cycle.
  void verify_acyclic() const {
    std::unordered_map<std::string, int> state;  // 0 new, 1 on stack, 2 done
    std::vector<std::string> stack;
    for (const auto& n : nodes_) {
      if (state[n] == 0) dfs(n, state, stack);
    }
  }

 private:
  void dfs(const std::string& n, std::unordered_map<std::string, int>& state,
           std::vector<std::string>& stack) const {
    state[n] = 1;
    stack.push_back(n);
    for (const auto& p : parents(n)) {
      if (state[p] == 1) {
        auto it = std::find(stack.begin(), stack.end(), p);
        std::vector<std::string> cycle(it, stack.end());
        cycle.push_back(p);
        throw InputError("CWE hierarchy cycle: " + join(cycle, " -> "));
      }
      if (state[p] == 0) dfs(p, state, stack);
    }
    stack.pop_back();
    state[n] = 2;
  }

  std::unordered_map<std::string, std::vector<std::string>> parents_;
  std::unordered_map<std::string, std::vector<std::string>> children_;
  std::set<std::string> nodes_;
};

struct RelatedTypes {
  std::vector<std::string> parents;
  std::vector<std::string> children;
  std::vector<std::string> siblings;
};

inline RelatedTypes related_types(const CweHierarchy& h, const std::string& id) {
  if (!h.contains(id)) throw InputError("unknown CWE id: " + id);
  return RelatedTypes{h.parents(id), h.children(id), h.siblings(id)};
}

// ---------------------------------------------------------------------------
// KB file I/O: one JSON record per line with fields id, name, parents,
// examples, fixes. A record holding only "_meta" is provenance metadata.
// ---------------------------------------------------------------------------

struct LoadedKb {
  CweKb kb;
  CweHierarchy hierarchy;
  nlohmann::json meta;  // null when absent
};

inline LoadedKb load_kb(const std::string& path) {
  LoadedKb out;
  std::string content = read_file(path);
  auto lines = split_lines(content);
  std::size_t load_index = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (rtrim(lines[i]).empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("parse error at " + where + ": " + e.what());
    }
    if (rec.contains("_meta")) {
      out.meta = rec["_meta"];
      continue;
    }
    for (const char* field : {"id", "name"}) {
      if (!rec.contains(field) || !rec[field].is_string()) {
        throw InputError("parse error at " + where + ": missing field '" + field + "'");
      }
    }
    CweEntry entry;
    entry.id = rec["id"].get<std::string>();
    entry.name = rec["name"].get<std::string>();
    entry.load_index = load_index++;
    if (!valid_cwe_id(entry.id)) {
      throw InputError(where + ": id '" + entry.id + "' does not match CWE-<digits>");
    }
    if (rec.contains("parents")) {
      for (const auto& p : rec["parents"]) entry.parents.push_back(p.get<std::string>());
    }
    if (rec.contains("examples")) {
      for (const auto& e : rec["examples"]) {
        CweExample ex;
        ex.code = e.value("code", "");
        ex.language = e.value("language", "");
        ex.analysis = e.value("analysis", "");
        entry.examples.push_back(std::move(ex));
      }
    }
    if (rec.contains("fixes")) {
      for (const auto& f : rec["fixes"]) entry.fixes.push_back(f.get<std::string>());
    }
    if (!entry.fixes.empty() && entry.fixes.size() != entry.examples.size()) {
      throw InputError(where + ": fixes must be absent or aligned 1:1 with examples");
    }
    if (out.kb.count(entry.id)) throw InputError(where + ": duplicate id " + entry.id);
    out.hierarchy.add_node(entry.id);
    for (const auto& p : entry.parents) out.hierarchy.add_edge(entry.id, p);
    out.kb.emplace(entry.id, std::move(entry));
  }
  out.hierarchy.verify_acyclic();
  return out;
}

inline void save_kb(const LoadedKb& kb, const std::string& path) {
  // Entries serialize in load order; writes go through a temp file swapped
  // into place so readers never observe a partial KB.
  std::vector<const CweEntry*> ordered;
  ordered.reserve(kb.kb.size());
  for (const auto& [id, entry] : kb.kb) ordered.push_back(&entry);
  std::sort(ordered.begin(), ordered.end(),
            [](const CweEntry* a, const CweEntry* b) { return a->load_index < b->load_index; });
  std::string out;
  if (!kb.meta.is_null()) {
    nlohmann::json meta_rec;
    meta_rec["_meta"] = kb.meta;
    out += meta_rec.dump();
    out += '\n';
  }
  for (const CweEntry* entry : ordered) {
    nlohmann::json rec;
    rec["id"] = entry->id;
    rec["name"] = entry->name;
    rec["parents"] = entry->parents;
    rec["examples"] = nlohmann::json::array();
    for (const auto& e : entry->examples) {
      rec["examples"].push_back({{"code", e.code}, {"language", e.language}, {"analysis", e.analysis}});
    }
    rec["fixes"] = entry->fixes;
    out += rec.dump();
    out += '\n';
  }
  const std::string tmp = path + ".tmp";
  write_file(tmp, out);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw InputError("cannot replace KB file: " + path);
  }
}

// ---------------------------------------------------------------------------
// Fix generation
// ---------------------------------------------------------------------------

inline std::string render_fix_prompt(const std::string& code, const std::string& name,
                                     const std::string& analysis) {
  return "The code " + code + " contains a vulnerability of type " + name +
         ". The analysis of this vulnerable code is " + analysis +
         ". Please generate the repaired code to address the vulnerability:";
}

struct FixContext {
  std::string prompt;
  std::string code;
  std::string name;
  std::string analysis;
};

struct FixResult {
  bool ok = false;
  std::string text;   // generated fix when ok
  std::string error;  // diagnostic when not
};

class FixGenerator {
 public:
  virtual ~FixGenerator() = default;
  virtual FixResult generate(const FixContext& ctx) = 0;
};

// Deterministic offline generator for tests and dry runs.
class StubFixGenerator : public FixGenerator {
 public:
  FixResult generate(const FixContext& ctx) override {
    return {true, "FIXED:" + ctx.code, ""};
  }
};

// Replays a recorded transcript keyed by the exact prompt. The transcript is
// JSONL records {prompt, text}.
class RecordedFixGenerator : public FixGenerator {
 public:
  explicit RecordedFixGenerator(const std::string& transcript_path) {
    std::string content = read_file(transcript_path);
    auto lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (rtrim(lines[i]).empty()) continue;
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::exception& e) {
        throw InputError("parse error at " + transcript_path + ":" + std::to_string(i + 1) +
                         ": " + e.what());
      }
      responses_[rec.at("prompt").get<std::string>()] = rec.at("text").get<std::string>();
    }
  }

  FixResult generate(const FixContext& ctx) override {
    auto it = responses_.find(ctx.prompt);
    if (it == responses_.end()) return {false, "", "no recorded response for prompt"};
    return {true, it->second, ""};
  }

 private:
  std::unordered_map<std::string, std::string> responses_;
};

struct FixGenError {
  std::string cwe_id;
  std::size_t example_index = 0;
  std::string message;
};

// Fills in missing fixes entry by entry. An entry either gains a complete
// fix list or is left untouched when any of its examples fails; existing
// fixes are never regenerated. The updated KB is persisted when `path` is
// nonempty.
inline std::vector<FixGenError> generate_fixes(LoadedKb& kb, FixGenerator& client,
                                               const std::string& path = "") {
  std::vector<FixGenError> errors;
  for (auto& [id, entry] : kb.kb) {
    if (entry.examples.empty() || entry.has_fixes()) continue;
    std::vector<std::string> fixes;
    fixes.reserve(entry.examples.size());
    bool failed = false;
    for (std::size_t k = 0; k < entry.examples.size(); ++k) {
      const auto& ex = entry.examples[k];
      FixContext ctx{render_fix_prompt(ex.code, entry.name, ex.analysis), ex.code, entry.name,
                     ex.analysis};
      FixResult r = client.generate(ctx);
      if (!r.ok) {
        errors.push_back({id, k, r.error});
        failed = true;
        break;
      }
      fixes.push_back(std::move(r.text));
    }
    if (!failed) entry.fixes = std::move(fixes);
  }
  if (!path.empty()) save_kb(kb, path);
  return errors;
}

// ---------------------------------------------------------------------------
// Knowledge assembly
// ---------------------------------------------------------------------------

struct KnowledgePair {
  std::string example_code;
  std::string fix_code;
  std::string origin_cwe;
  int label = 0;  // 1 iff origin equals the target type
};

struct KnowledgeBundle {
  std::string cwe_name;
  std::vector<KnowledgePair> pairs;
};

namespace kbdetail {

inline void append_entry_pairs(const CweKb& kb, const std::string& id, int label,
                               std::size_t max_pairs, std::vector<KnowledgePair>& out) {
  auto it = kb.find(id);
  if (it == kb.end()) return;
  const CweEntry& entry = it->second;
  if (!entry.has_fixes()) return;
  for (std::size_t k = 0; k < entry.examples.size() && out.size() < max_pairs; ++k) {
    out.push_back({entry.examples[k].code, entry.fixes[k], id, label});
  }
}

inline std::vector<std::string> in_load_order(const CweKb& kb, std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end(), [&kb](const std::string& a, const std::string& b) {
    auto ia = kb.find(a), ib = kb.find(b);
    std::size_t ka = ia == kb.end() ? SIZE_MAX : ia->second.load_index;
    std::size_t kb_ = ib == kb.end() ? SIZE_MAX : ib->second.load_index;
    if (ka != kb_) return ka < kb_;
    return a < b;
  });
  return ids;
}

}  // namespace kbdetail

// Builds the labeled example/fix pair list for a target type: the target's
// own pairs first (label 1), then children, parents, siblings (label 0),
// each group in KB file order, truncated to max_pairs.
inline KnowledgeBundle assemble_knowledge(const CweKb& kb, const CweHierarchy& h,
                                          const std::string& target_id, std::size_t max_pairs) {
  auto it = kb.find(target_id);
  if (it == kb.end()) throw InputError("unknown CWE id: " + target_id);
  KnowledgeBundle bundle;
  bundle.cwe_name = it->second.name;
  if (max_pairs == 0) return bundle;

  kbdetail::append_entry_pairs(kb, target_id, 1, max_pairs, bundle.pairs);
  RelatedTypes rel = related_types(h, target_id);
  for (const auto& group : {rel.children, rel.parents, rel.siblings}) {
    for (const auto& id : kbdetail::in_load_order(kb, group)) {
      if (id == target_id) continue;
      kbdetail::append_entry_pairs(kb, id, 0, max_pairs, bundle.pairs);
    }
  }
  return bundle;
}

}  // namespace fidfix
