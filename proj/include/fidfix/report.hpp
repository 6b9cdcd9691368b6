#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fidfix/corpus.hpp"
#include "fidfix/metrics.hpp"
#include "fidfix/preprocess.hpp"
#include "fidfix/stats.hpp"

namespace fidfix {

struct SampleRow {
  std::string id;
  bool em = false;
  double bleu = 0.0;
  double codebleu = 0.0;
};

struct GroupRow {
  std::string name;
  std::size_t count = 0;
  double em_percent = 0.0;
};

struct GroupTable {
  std::string criterion;
  std::vector<GroupRow> groups;
};

struct EvalReport {
  double em_percent = 0.0;
  double bleu_percent = 0.0;
  double codebleu_percent = 0.0;
  std::vector<SampleRow> rows;
  std::optional<GroupTable> subgroups;
};

enum class GroupCriterion { length, frequency, risk };

struct GroupSpec {
  GroupCriterion criterion = GroupCriterion::length;
  int length_threshold = 449;
  std::vector<std::string> top_cwe_ids;  // risk criterion
};

inline GroupCriterion parse_group_criterion(const std::string& s) {
  if (s == "length") return GroupCriterion::length;
  if (s == "frequency") return GroupCriterion::frequency;
  if (s == "risk") return GroupCriterion::risk;
  throw InputError("unknown group criterion '" + s + "' (length|frequency|risk)");
}

// Scores one prediction against its reference. BLEU is sentence level over
// surface tokens; EM compares vocabulary token ids.
inline SampleRow score_sample(const std::string& id, const std::string& pred_text,
                              const std::string& ref_text, const Vocabulary& vocab) {
  SampleRow row;
  row.id = id;
  row.em = exact_match(tokenize(pred_text, vocab), tokenize(ref_text, vocab));
  auto ref_words = word_tokens(ref_text);
  auto pred_words = word_tokens(pred_text);
  row.bleu = ref_words.empty() ? 0.0 : bleu4(pred_words, ref_words);
  row.codebleu = codebleu(pred_text, ref_text);
  return row;
}

inline EvalReport aggregate_rows(std::vector<SampleRow> rows) {
  EvalReport report;
  report.rows = std::move(rows);
  if (report.rows.empty()) return report;
  double em = 0.0, bleu = 0.0, cb = 0.0;
  for (const auto& r : report.rows) {
    em += r.em ? 1.0 : 0.0;
    bleu += r.bleu;
    cb += r.codebleu;
  }
  const double n = static_cast<double>(report.rows.size());
  report.em_percent = 100.0 * em / n;
  report.bleu_percent = 100.0 * bleu / n;
  report.codebleu_percent = 100.0 * cb / n;
  return report;
}

// Splits the test set by the configured criterion and reports per-group EM
// with counts. Groups must partition the rows.
inline GroupTable subgroup_report(const std::vector<SampleRow>& rows, const GroupSpec& spec,
                                  const std::vector<RepairSample>& samples,
                                  const Vocabulary& vocab) {
  if (rows.size() != samples.size()) {
    throw InputError("subgroup_report: rows and samples must align");
  }
  GroupTable table;
  std::vector<std::string> assignment(rows.size());
  if (spec.criterion == GroupCriterion::length) {
    table.criterion = "length";
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::size_t len = tokenize(samples[i].source_fn, vocab).size();
      assignment[i] = len > static_cast<std::size_t>(spec.length_threshold) ? "long" : "short";
    }
  } else if (spec.criterion == GroupCriterion::frequency) {
    // Half split on CWE-type frequency: the half of the samples with the
    // more frequent types forms the frequent group; ties break by sample
    // order so the split stays deterministic.
    table.criterion = "frequency";
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.cwe_type];
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return counts[samples[a].cwe_type] > counts[samples[b].cwe_type];
    });
    for (std::size_t k = 0; k < order.size(); ++k) {
      assignment[order[k]] = k < order.size() / 2 ? "frequent" : "infrequent";
    }
  } else {
    table.criterion = "risk";
    std::set<std::string> top(spec.top_cwe_ids.begin(), spec.top_cwe_ids.end());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      assignment[i] = top.count(samples[i].cwe_type) ? "top_risky" : "less_risky";
    }
  }

  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // name -> (count, em hits)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (assignment[i].empty()) continue;
    auto& t = tally[assignment[i]];
    ++t.first;
    if (rows[i].em) ++t.second;
    ++assigned;
  }
  if (assigned != rows.size()) {
    throw InputError("subgroup_report: groups do not partition the test set");
  }
  for (const auto& [name, t] : tally) {
    GroupRow g;
    g.name = name;
    g.count = t.first;
    g.em_percent = t.first ? 100.0 * static_cast<double>(t.second) / static_cast<double>(t.first)
                           : 0.0;
    table.groups.push_back(g);
  }
  return table;
}

inline std::vector<std::string> load_top_cwe_list(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& line : split_lines(read_file(path))) {
    std::string t = rtrim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!valid_cwe_id(t)) throw InputError(path + ": invalid CWE id '" + t + "'");
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: a line-record file plus a human-readable table.
// ---------------------------------------------------------------------------

inline std::string report_to_jsonl(const EvalReport& report, const nlohmann::json& meta) {
  std::string out;
  nlohmann::json header;
  header["_meta"] = meta;
  header["_meta"]["bleu_aggregation"] = "sentence-mean";
  header["_meta"]["em_percent"] = report.em_percent;
  header["_meta"]["bleu_percent"] = report.bleu_percent;
  header["_meta"]["codebleu_percent"] = report.codebleu_percent;
  out += header.dump();
  out += '\n';
  for (const auto& r : report.rows) {
    nlohmann::json rec;
    rec["id"] = r.id;
    rec["em"] = r.em;
    rec["bleu"] = r.bleu;
    rec["codebleu"] = r.codebleu;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline std::string render_report_table(const EvalReport& report) {
  char buf[160];
  std::string out;
  out += "metric      value\n";
  out += "----------  -------\n";
  std::snprintf(buf, sizeof(buf), "EM          %7.2f\n", report.em_percent);
  out += buf;
  std::snprintf(buf, sizeof(buf), "BLEU-4      %7.2f\n", report.bleu_percent);
  out += buf;
  std::snprintf(buf, sizeof(buf), "CodeBLEU    %7.2f\n", report.codebleu_percent);
  out += buf;
  std::snprintf(buf, sizeof(buf), "samples     %7zu\n", report.rows.size());
  out += buf;
  if (report.subgroups) {
    out += "\ngroup criterion: " + report.subgroups->criterion + "\n";
    out += "group         count  EM\n";
    out += "------------  -----  -------\n";
    for (const auto& g : report.subgroups->groups) {
      std::snprintf(buf, sizeof(buf), "%-12s  %5zu  %7.2f\n", g.name.c_str(), g.count,
                    g.em_percent);
      out += buf;
    }
  }
  return out;
}

}  // namespace fidfix
