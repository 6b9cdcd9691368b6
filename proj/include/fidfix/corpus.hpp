#pragma once

#include <optional>
#include <regex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fidfix/common.hpp"
#include "fidfix/preprocess.hpp"

namespace fidfix {

// One vulnerable function with its repaired form, weakness type, and the
// (0-based, inclusive) line span of the vulnerable region when known.
struct RepairSample {
  std::string id;
  std::string source_fn;
  std::string fixed_fn;
  std::string cwe_type;
  std::optional<std::pair<int, int>> vuln_span;
};

struct DatasetSplits {
  std::vector<RepairSample> train;
  std::vector<RepairSample> valid;
  std::vector<RepairSample> test;
};

struct DedupReport {
  std::size_t removed_train = 0;
  std::size_t removed_valid = 0;
  std::size_t removed_test_internal = 0;
  std::size_t before_train = 0, after_train = 0;
  std::size_t before_valid = 0, after_valid = 0;
  std::size_t before_test = 0, after_test = 0;
};

inline bool valid_cwe_id(const std::string& s) {
  if (s.size() < 5 || s.compare(0, 4, "CWE-") != 0) return false;
  for (std::size_t i = 4; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

namespace detail {

inline void validate_sample(const RepairSample& s, const std::string& where) {
  if (!valid_cwe_id(s.cwe_type)) {
    throw InputError(where + ": cwe_type '" + s.cwe_type + "' does not match CWE-<digits>");
  }
  if (s.vuln_span) {
    auto [start, end] = *s.vuln_span;
    int n_lines = static_cast<int>(split_lines(s.source_fn).size());
    if (start < 0 || end < start || end >= n_lines) {
      throw InputError(where + ": vuln_span [" + std::to_string(start) + "," +
                       std::to_string(end) + "] out of range for " + std::to_string(n_lines) +
                       " source lines");
    }
  }
}

}  // namespace detail

// Loads a JSONL dataset. One record per line with fields id, split,
// source_fn, fixed_fn, cwe_type and optional vuln_span. File order is
// preserved within each split.
inline DatasetSplits load_dataset(const std::string& path) {
  DatasetSplits splits;
  std::string content = read_file(path);
  auto lines = split_lines(content);
  std::unordered_map<std::string, std::vector<int>> id_lines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (rtrim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("parse error at " + where + ": " + e.what());
    }
    if (rec.contains("_meta")) continue;  // provenance header
    for (const char* field : {"id", "split", "source_fn", "fixed_fn", "cwe_type"}) {
      if (!rec.contains(field) || !rec[field].is_string()) {
        throw InputError("parse error at " + where + ": missing field '" + field + "'");
      }
    }
    RepairSample s;
    s.id = rec["id"].get<std::string>();
    s.source_fn = rec["source_fn"].get<std::string>();
    s.fixed_fn = rec["fixed_fn"].get<std::string>();
    s.cwe_type = rec["cwe_type"].get<std::string>();
    if (rec.contains("vuln_span") && !rec["vuln_span"].is_null()) {
      const auto& span = rec["vuln_span"];
      if (!span.is_array() || span.size() != 2 || !span[0].is_number_integer() ||
          !span[1].is_number_integer()) {
        throw InputError("parse error at " + where + ": vuln_span must be [start, end]");
      }
      s.vuln_span = std::make_pair(span[0].get<int>(), span[1].get<int>());
    }
    detail::validate_sample(s, where);
    id_lines[s.id].push_back(static_cast<int>(i + 1));

    const std::string split = rec["split"].get<std::string>();
    if (split == "train") {
      splits.train.push_back(std::move(s));
    } else if (split == "valid") {
      splits.valid.push_back(std::move(s));
    } else if (split == "test") {
      splits.test.push_back(std::move(s));
    } else {
      throw InputError("parse error at " + where + ": unknown split tag '" + split + "'");
    }
  }
  std::vector<std::string> duplicated;
  for (const auto& [id, where] : id_lines) {
    if (where.size() > 1) duplicated.push_back(id);
  }
  if (!duplicated.empty()) {
    std::sort(duplicated.begin(), duplicated.end());
    throw InputError(path + ": duplicate sample ids: " + join(duplicated, ", "));
  }
  return splits;
}

inline nlohmann::json sample_to_json(const RepairSample& s, const std::string& split) {
  nlohmann::json rec;
  rec["id"] = s.id;
  rec["split"] = split;
  rec["source_fn"] = s.source_fn;
  rec["fixed_fn"] = s.fixed_fn;
  rec["cwe_type"] = s.cwe_type;
  if (s.vuln_span) rec["vuln_span"] = {s.vuln_span->first, s.vuln_span->second};
  return rec;
}

inline void save_dataset(const DatasetSplits& d, const std::string& path,
                         const nlohmann::json& meta = nlohmann::json()) {
  std::string out;
  if (!meta.is_null()) {
    nlohmann::json header;
    header["_meta"] = meta;
    out += header.dump();
    out += '\n';
  }
  auto emit = [&out](const std::vector<RepairSample>& v, const char* split) {
    for (const auto& s : v) {
      out += sample_to_json(s, split).dump();
      out += '\n';
    }
  };
  emit(d.train, "train");
  emit(d.valid, "valid");
  emit(d.test, "test");
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

namespace detail {

// Byte offset where line `idx` starts; offsets.size() == line count + 1 with
// the final entry at text.size().
inline std::vector<std::size_t> line_offsets(std::string_view text) {
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') {
      offsets.push_back(i + 1);
    } else if (text[i] == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      offsets.push_back(i + 1);
    }
  }
  offsets.push_back(text.size());
  return offsets;
}

// End offset of the content of line `idx`, excluding its line terminator.
inline std::size_t line_content_end(std::string_view text, const std::vector<std::size_t>& offs,
                                    std::size_t idx) {
  std::size_t end = offs[idx + 1];
  if (end > offs[idx] && end <= text.size()) {
    if (end >= 2 && text[end - 2] == '\r' && text[end - 1] == '\n') return end - 2;
    if (text[end - 1] == '\n' || text[end - 1] == '\r') return end - 1;
  }
  return end;
}

// Longest-common-subsequence alignment over lines; returns for each line of
// a/b whether it is kept (part of the LCS) or changed.
struct LineDiff {
  std::vector<bool> a_kept;
  std::vector<bool> b_kept;
};

inline LineDiff diff_lines(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      lcs[i][j] = (a[i] == b[j]) ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  LineDiff d;
  d.a_kept.assign(n, false);
  d.b_kept.assign(m, false);
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
      d.a_kept[i] = d.b_kept[j] = true;
      ++i, ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  return d;
}

// A changed region of the target: [first, last] inclusive when nonempty, or
// an empty region anchored before line `anchor` (pure deletion).
struct Hunk {
  bool empty = false;
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t anchor = 0;
};

inline std::vector<Hunk> target_hunks(const std::vector<std::string>& src,
                                      const std::vector<std::string>& dst) {
  LineDiff d = diff_lines(src, dst);
  std::vector<Hunk> hunks;
  std::size_t i = 0, j = 0;
  const std::size_t n = src.size(), m = dst.size();
  while (i < n || j < m) {
    if (i < n && j < m && d.a_kept[i] && d.b_kept[j]) {
      ++i, ++j;
      continue;
    }
    // A maximal run of non-kept lines on either side forms one hunk.
    std::size_t j_start = j;
    bool src_changed = false;
    while (i < n && !d.a_kept[i]) ++i, src_changed = true;
    while (j < m && !d.b_kept[j]) ++j;
    if (j > j_start) {
      hunks.push_back({false, j_start, j - 1, 0});
    } else if (src_changed) {
      hunks.push_back({true, 0, 0, j_start});
    }
  }
  return hunks;
}

}  // namespace detail

// Marks the vulnerable span of the source with <StartLoc>/<EndLoc>. The
// tokens are spliced in without extra whitespace, so deleting every marker
// substring restores the original text byte for byte.
inline std::string annotate_source(const RepairSample& s) {
  if (!s.vuln_span) throw InputError("sample " + s.id + ": localization required");
  std::string_view text = s.source_fn;
  auto offs = detail::line_offsets(text);
  auto [start, end] = *s.vuln_span;
  std::size_t insert_start = offs[static_cast<std::size_t>(start)];
  std::size_t insert_end = detail::line_content_end(text, offs, static_cast<std::size_t>(end));
  std::string out;
  out.reserve(text.size() + kStartLoc.size() + kEndLoc.size());
  out.append(text.substr(0, insert_start));
  out.append(kStartLoc);
  out.append(text.substr(insert_start, insert_end - insert_start));
  out.append(kEndLoc);
  out.append(text.substr(insert_end));
  return out;
}

// Wraps every changed region of the fix in <ModStart>/<ModEnd>, derived from
// a minimal line diff against the source. Pure deletions and the no-change
// case produce an adjacent <ModStart><ModEnd> pair at the region's anchor.
inline std::string annotate_target(const RepairSample& s) {
  std::string_view text = s.fixed_fn;
  auto src_lines = split_lines(s.source_fn);
  auto dst_lines = split_lines(s.fixed_fn);
  auto hunks = detail::target_hunks(src_lines, dst_lines);
  if (hunks.empty()) {
    // Identical texts: a single empty modification anchored at the start.
    return std::string(kModStart) + std::string(kModEnd) + std::string(text);
  }
  auto offs = detail::line_offsets(text);
  // (position, marker) insertions, applied back to front.
  std::vector<std::pair<std::size_t, std::string_view>> inserts;
  for (const auto& h : hunks) {
    if (h.empty) {
      std::size_t pos = h.anchor < dst_lines.size() ? offs[h.anchor] : text.size();
      inserts.emplace_back(pos, kModStart);
      inserts.emplace_back(pos, kModEnd);
    } else {
      inserts.emplace_back(offs[h.first], kModStart);
      inserts.emplace_back(detail::line_content_end(text, offs, h.last), kModEnd);
    }
  }
  std::stable_sort(inserts.begin(), inserts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  std::size_t cursor = 0;
  for (const auto& [pos, marker] : inserts) {
    out.append(text.substr(cursor, pos - cursor));
    out.append(marker);
    cursor = pos;
  }
  out.append(text.substr(cursor));
  return out;
}

inline std::pair<std::string, std::string> annotate_sample(const RepairSample& s) {
  return {annotate_source(s), annotate_target(s)};
}

inline std::string strip_special_tokens(std::string_view text) {
  std::string out(text);
  for (auto marker : {kStartLoc, kEndLoc, kModStart, kModEnd}) {
    std::size_t pos;
    while ((pos = out.find(marker)) != std::string::npos) out.erase(pos, marker.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deduplication
// ---------------------------------------------------------------------------

// Duplicate equality ignores trailing whitespace per line and line-ending
// style, nothing else.
inline std::string dedup_normalize(std::string_view text) {
  auto lines = split_lines(text);
  std::vector<std::string> trimmed;
  trimmed.reserve(lines.size());
  for (const auto& l : lines) trimmed.push_back(rtrim(l));
  return join(trimmed, "\n");
}

inline std::string dedup_key(const RepairSample& s) {
  std::string a = dedup_normalize(s.source_fn);
  std::string b = dedup_normalize(s.fixed_fn);
  return std::to_string(a.size()) + ":" + a + b;
}

// Three-step leakage removal: train samples matching valid/test go first,
// then valid samples matching test, then later duplicates inside test.
// First occurrence wins everywhere; running it twice changes nothing.
inline std::pair<DatasetSplits, DedupReport> deduplicate_splits(const DatasetSplits& d) {
  DedupReport report;
  report.before_train = d.train.size();
  report.before_valid = d.valid.size();
  report.before_test = d.test.size();

  std::unordered_set<std::string> valid_test_keys;
  for (const auto& s : d.valid) valid_test_keys.insert(dedup_key(s));
  for (const auto& s : d.test) valid_test_keys.insert(dedup_key(s));
  std::unordered_set<std::string> test_keys;
  for (const auto& s : d.test) test_keys.insert(dedup_key(s));

  DatasetSplits out;
  for (const auto& s : d.train) {
    if (valid_test_keys.count(dedup_key(s))) {
      ++report.removed_train;
    } else {
      out.train.push_back(s);
    }
  }
  for (const auto& s : d.valid) {
    if (test_keys.count(dedup_key(s))) {
      ++report.removed_valid;
    } else {
      out.valid.push_back(s);
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& s : d.test) {
    if (!seen.insert(dedup_key(s)).second) {
      ++report.removed_test_internal;
    } else {
      out.test.push_back(s);
    }
  }
  report.after_train = out.train.size();
  report.after_valid = out.valid.size();
  report.after_test = out.test.size();
  return {std::move(out), report};
}

}  // namespace fidfix
