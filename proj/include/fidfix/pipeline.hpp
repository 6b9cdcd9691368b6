#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fidfix/checkpoint.hpp"
#include "fidfix/config.hpp"
#include "fidfix/context.hpp"
#include "fidfix/corpus.hpp"
#include "fidfix/cwe_kb.hpp"
#include "fidfix/fixgen_http.hpp"
#include "fidfix/metrics.hpp"
#include "fidfix/model.hpp"
#include "fidfix/preprocess.hpp"
#include "fidfix/report.hpp"
#include "fidfix/stats.hpp"
#include "fidfix/train.hpp"

namespace fidfix::pipeline {

inline nlohmann::json run_meta(const RunConfig& cfg) {
  nlohmann::json meta;
  meta["config_hash"] = config_hash(cfg);
  meta["seed"] = cfg.model.seed;
  return meta;
}

inline void ensure_out_dir(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline std::string predictions_path(const RunConfig& cfg) {
  return cfg.predictions.empty() ? out_path(cfg, "predictions.jsonl") : cfg.predictions;
}

inline std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? out_path(cfg, "checkpoint.bin") : cfg.checkpoint;
}

// ---------------------------------------------------------------------------
// dedup
// ---------------------------------------------------------------------------

inline int run_dedup(const RunConfig& cfg) {
  require_file("dataset", cfg.dataset);
  ensure_out_dir(cfg);
  DatasetSplits splits = load_dataset(cfg.dataset);
  auto [deduped, report] = deduplicate_splits(splits);
  save_dataset(deduped, out_path(cfg, "dataset.dedup.jsonl"), run_meta(cfg));

  nlohmann::json rep;
  rep["_meta"] = run_meta(cfg);
  rep["removed_train"] = report.removed_train;
  rep["removed_valid"] = report.removed_valid;
  rep["removed_test_internal"] = report.removed_test_internal;
  rep["before"] = {{"train", report.before_train},
                   {"valid", report.before_valid},
                   {"test", report.before_test}};
  rep["after"] = {{"train", report.after_train},
                  {"valid", report.after_valid},
                  {"test", report.after_test}};
  write_file(out_path(cfg, "dedup_report.json"), rep.dump(2) + "\n");
  std::printf("dedup: train %zu -> %zu, valid %zu -> %zu, test %zu -> %zu\n", report.before_train,
              report.after_train, report.before_valid, report.after_valid, report.before_test,
              report.after_test);
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess: vocabulary construction plus segment statistics
// ---------------------------------------------------------------------------

inline std::vector<std::string> vocabulary_texts(const DatasetSplits& splits,
                                                 const LoadedKb* kb) {
  std::vector<std::string> texts;
  for (const auto& s : splits.train) {
    if (s.vuln_span) {
      auto [src, tgt] = annotate_sample(s);
      texts.push_back(src);
      texts.push_back(tgt);
    } else {
      texts.push_back(s.source_fn);
      texts.push_back(s.fixed_fn);
    }
    AstNodeSeq seq = linearize_dfs(parse_source(s.source_fn));
    texts.push_back(join(seq.entries, " "));
    texts.push_back(s.cwe_type);
  }
  if (kb != nullptr) {
    for (const auto& [id, entry] : kb->kb) {
      texts.push_back(entry.name);
      for (const auto& ex : entry.examples) texts.push_back(ex.code);
      for (const auto& fx : entry.fixes) texts.push_back(fx);
    }
  }
  return texts;
}

inline int run_preprocess(const RunConfig& cfg) {
  require_file("dataset", cfg.dataset);
  ensure_out_dir(cfg);
  DatasetSplits splits = load_dataset(cfg.dataset);
  std::unique_ptr<LoadedKb> kb;
  if (!cfg.kb.empty()) {
    require_file("kb", cfg.kb);
    kb = std::make_unique<LoadedKb>(load_kb(cfg.kb));
  }
  Vocabulary vocab = build_vocabulary(vocabulary_texts(splits, kb.get()), cfg.vocab_budget);
  std::string vocab_path = cfg.vocab.empty() ? out_path(cfg, "vocab.txt") : cfg.vocab;
  vocab.save(vocab_path);
  // The vocabulary format is line-positional, so provenance goes to a
  // sidecar instead of the file itself.
  nlohmann::json meta;
  meta["_meta"] = run_meta(cfg);
  meta["vocab_size"] = vocab.size();
  write_file(vocab_path + ".meta.json", meta.dump(2) + "\n");

  // Segment statistics over the whole dataset at the configured L and K.
  std::size_t total = 0, within_budget = 0;
  auto tally = [&](const std::vector<RepairSample>& v) {
    for (const auto& s : v) {
      TokenSeq toks = tokenize(s.source_fn, vocab);
      std::size_t n_segs =
          (std::max<std::size_t>(toks.size(), 1) + cfg.model.segment_len - 1) /
          static_cast<std::size_t>(cfg.model.segment_len);
      ++total;
      if (n_segs <= static_cast<std::size_t>(cfg.model.max_segments)) ++within_budget;
    }
  };
  tally(splits.train);
  tally(splits.valid);
  tally(splits.test);
  nlohmann::json stats;
  stats["_meta"] = run_meta(cfg);
  stats["samples"] = total;
  stats["within_segment_budget"] = within_budget;
  write_file(out_path(cfg, "preprocess_stats.json"), stats.dump(2) + "\n");
  std::printf("preprocess: vocabulary of %d tokens -> %s\n", vocab.size(), vocab_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// build-kb
// ---------------------------------------------------------------------------

inline std::unique_ptr<FixGenerator> make_fix_generator(const RunConfig& cfg) {
  if (cfg.fixgen_mode == "stub") return std::make_unique<StubFixGenerator>();
  if (cfg.fixgen_mode == "recorded") {
    require_file("fixgen_transcript", cfg.fixgen_transcript);
    return std::make_unique<RecordedFixGenerator>(cfg.fixgen_transcript);
  }
  if (cfg.fixgen_mode == "live") {
    if (cfg.fixgen_endpoint.empty()) {
      throw InputError("config error: field 'fixgen_endpoint': required for live mode");
    }
    return std::make_unique<HttpFixGenerator>(cfg.fixgen_endpoint, cfg.fixgen_model);
  }
  throw InputError("config error: field 'fixgen_mode': unknown mode '" + cfg.fixgen_mode +
                   "' (stub|recorded|live)");
}

inline int run_build_kb(const RunConfig& cfg) {
  require_file("kb", cfg.kb);
  LoadedKb kb = load_kb(cfg.kb);
  kb.meta = run_meta(cfg);
  std::unique_ptr<FixGenerator> client = make_fix_generator(cfg);
  auto errors = generate_fixes(kb, *client, cfg.kb);
  for (const auto& e : errors) {
    std::fprintf(stderr, "fix generation failed for %s example %zu: %s\n", e.cwe_id.c_str(),
                 e.example_index, e.message.c_str());
  }
  std::size_t with_fixes = 0;
  for (const auto& [id, entry] : kb.kb) {
    if (entry.has_fixes() || entry.examples.empty()) ++with_fixes;
  }
  std::printf("build-kb: %zu/%zu entries complete\n", with_fixes, kb.kb.size());
  return 0;
}

// ---------------------------------------------------------------------------
// bundles shared by train/predict
// ---------------------------------------------------------------------------

struct NamedBundle {
  std::string id;
  ContextBundle bundle;
};

inline std::optional<AstNode> external_tree_for(const RunConfig& cfg, const std::string& id) {
  if (cfg.ast_dir.empty()) return std::nullopt;
  std::filesystem::path p = std::filesystem::path(cfg.ast_dir) / (id + ".sexpr");
  if (!std::filesystem::exists(p)) return std::nullopt;
  return parse_sexpr_tree(read_file(p.string()));
}

inline std::vector<NamedBundle> build_bundles(const std::vector<RepairSample>& samples,
                                              const LoadedKb& kb, const Vocabulary& vocab,
                                              const RunConfig& cfg, std::size_t* skipped) {
  std::vector<NamedBundle> out;
  for (const auto& s : samples) {
    if (!s.vuln_span) {
      if (skipped) ++(*skipped);
      continue;
    }
    KnowledgeBundle knowledge;
    if (kb.kb.count(s.cwe_type)) {
      knowledge = assemble_knowledge(kb.kb, kb.hierarchy, s.cwe_type, cfg.max_pairs);
    }
    auto external = external_tree_for(cfg, s.id);
    ContextBundle bundle = build_context(s, knowledge, vocab, cfg.model.max_segments,
                                         cfg.model.segment_len,
                                         external ? &*external : nullptr);
    out.push_back({s.id, std::move(bundle)});
  }
  return out;
}

inline std::vector<ContextBundle> bare_bundles(std::vector<NamedBundle>& named) {
  std::vector<ContextBundle> out;
  out.reserve(named.size());
  for (auto& n : named) out.push_back(n.bundle);
  return out;
}

// ---------------------------------------------------------------------------
// adapt / train
// ---------------------------------------------------------------------------

inline std::vector<BugFixPair> load_bugfix_corpus(const std::string& path) {
  std::vector<BugFixPair> out;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (rtrim(lines[i]).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("parse error at " + path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    if (rec.contains("_meta")) continue;
    out.push_back({rec.at("buggy").get<std::string>(), rec.at("fixed").get<std::string>()});
  }
  return out;
}

inline std::string trace_to_jsonl(const TrainResult& result, const nlohmann::json& meta) {
  std::string out;
  nlohmann::json header;
  header["_meta"] = meta;
  out += header.dump();
  out += '\n';
  for (const auto& rec : result.trace) {
    nlohmann::json r;
    r["step"] = rec.step;
    r["l_repair"] = rec.l_repair;
    r["l_relevance"] = rec.l_relevance;
    r["total"] = rec.total;
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline FidModel fresh_or_loaded_model(const RunConfig& cfg, const Vocabulary& vocab) {
  if (!cfg.init_checkpoint.empty()) {
    require_file("init_checkpoint", cfg.init_checkpoint);
    LoadedCheckpoint loaded = load_checkpoint(cfg.init_checkpoint);
    if (loaded.model.config().vocab_size != vocab.size()) {
      throw InputError("config error: field 'init_checkpoint': checkpoint vocabulary (" +
                       std::to_string(loaded.model.config().vocab_size) +
                       ") does not match the vocabulary file (" + std::to_string(vocab.size()) +
                       ")");
    }
    return loaded.model;
  }
  ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size();
  return FidModel(mc);
}

inline int run_adapt(const RunConfig& cfg) {
  require_file("bugfix_dataset", cfg.bugfix_dataset);
  require_file("vocab", cfg.vocab);
  ensure_out_dir(cfg);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  std::vector<BugFixPair> corpus = load_bugfix_corpus(cfg.bugfix_dataset);
  FidModel model = fresh_or_loaded_model(cfg, vocab);
  TrainResult result = adapt_pretrain(model, corpus, vocab);
  std::string ckpt = checkpoint_path(cfg);
  save_checkpoint(model, fnv1a64(canonical_config(cfg)), ckpt);
  write_file(out_path(cfg, "adapt_trace.jsonl"), trace_to_jsonl(result, run_meta(cfg)));
  std::printf("adapt: %zu pairs, %zu steps -> %s\n", corpus.size(), result.trace.size(),
              ckpt.c_str());
  return 0;
}

inline int run_train(const RunConfig& cfg) {
  require_file("dataset", cfg.dataset);
  require_file("kb", cfg.kb);
  require_file("vocab", cfg.vocab);
  ensure_out_dir(cfg);
  DatasetSplits splits = load_dataset(cfg.dataset);
  LoadedKb kb = load_kb(cfg.kb);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  FidModel model = fresh_or_loaded_model(cfg, vocab);

  std::size_t skipped = 0;
  auto train_named = build_bundles(splits.train, kb, vocab, cfg, &skipped);
  auto valid_named = build_bundles(splits.valid, kb, vocab, cfg, &skipped);
  if (skipped) {
    std::fprintf(stderr, "train: skipped %zu samples without localization spans\n", skipped);
  }
  auto train_set = bare_bundles(train_named);
  auto valid_set = bare_bundles(valid_named);
  TrainResult result = train(model, train_set, valid_set);
  std::string ckpt = checkpoint_path(cfg);
  save_checkpoint(model, fnv1a64(canonical_config(cfg)), ckpt);
  write_file(out_path(cfg, "loss_trace.jsonl"), trace_to_jsonl(result, run_meta(cfg)));
  std::printf("train: %zu samples, best epoch %d (valid EM %.2f%%) -> %s\n", train_set.size(),
              result.best_epoch, 100.0 * result.best_valid_em, ckpt.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// predict / evaluate
// ---------------------------------------------------------------------------

inline int run_predict(const RunConfig& cfg) {
  require_file("dataset", cfg.dataset);
  require_file("kb", cfg.kb);
  require_file("vocab", cfg.vocab);
  std::string ckpt = checkpoint_path(cfg);
  require_file("checkpoint", ckpt);
  ensure_out_dir(cfg);
  DatasetSplits splits = load_dataset(cfg.dataset);
  LoadedKb kb = load_kb(cfg.kb);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const FidModel& model = loaded.model;

  std::size_t skipped = 0;
  auto bundles = build_bundles(splits.test, kb, vocab, cfg, &skipped);
  if (skipped) {
    std::fprintf(stderr, "predict: skipped %zu samples without localization spans\n", skipped);
  }
  std::vector<std::string> texts(bundles.size());
  parallel_for(bundles.size(), cfg.jobs, [&](std::size_t i) {
    TokenSeq out = model.generate(bundles[i].bundle, static_cast<std::size_t>(cfg.gen_max_len));
    texts[i] = detokenize(out, vocab);
  });

  std::string out;
  nlohmann::json header;
  header["_meta"] = run_meta(cfg);
  out += header.dump();
  out += '\n';
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    nlohmann::json rec;
    rec["id"] = bundles[i].id;
    rec["prediction"] = texts[i];
    out += rec.dump();
    out += '\n';
  }
  write_file(predictions_path(cfg), out);
  std::printf("predict: %zu predictions -> %s\n", bundles.size(), predictions_path(cfg).c_str());
  return 0;
}

inline std::map<std::string, std::string> load_predictions(const std::string& path) {
  std::map<std::string, std::string> out;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (rtrim(lines[i]).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("parse error at " + path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    if (rec.contains("_meta")) continue;
    out[rec.at("id").get<std::string>()] = rec.at("prediction").get<std::string>();
  }
  return out;
}

struct EvaluationInput {
  std::vector<RepairSample> samples;  // test samples with references available
  std::vector<std::string> predictions;
  std::vector<std::string> references;
};

inline EvaluationInput gather_evaluation_input(const RunConfig& cfg, const DatasetSplits& splits,
                                               const std::map<std::string, std::string>& preds) {
  EvaluationInput in;
  for (const auto& s : splits.test) {
    if (!s.vuln_span) continue;
    auto it = preds.find(s.id);
    if (it == preds.end()) continue;
    in.samples.push_back(s);
    in.predictions.push_back(it->second);
    in.references.push_back(annotate_target(s));
  }
  return in;
}

inline int run_evaluate(const RunConfig& cfg) {
  require_file("dataset", cfg.dataset);
  require_file("vocab", cfg.vocab);
  std::string preds_path = predictions_path(cfg);
  require_file("predictions", preds_path);
  ensure_out_dir(cfg);
  DatasetSplits splits = load_dataset(cfg.dataset);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  auto preds = load_predictions(preds_path);
  EvaluationInput in = gather_evaluation_input(cfg, splits, preds);
  if (in.samples.empty()) {
    throw InputError("evaluate: no test samples with predictions and references");
  }

  std::vector<SampleRow> rows(in.samples.size());
  parallel_for(in.samples.size(), cfg.jobs, [&](std::size_t i) {
    rows[i] = score_sample(in.samples[i].id, in.predictions[i], in.references[i], vocab);
  });
  EvalReport report = aggregate_rows(std::move(rows));

  nlohmann::json meta = run_meta(cfg);
  if (!cfg.groups.empty()) {
    GroupSpec spec;
    spec.criterion = parse_group_criterion(cfg.groups);
    spec.length_threshold = cfg.length_threshold;
    if (spec.criterion == GroupCriterion::risk) {
      require_file("top10_file", cfg.top10_file);
      spec.top_cwe_ids = load_top_cwe_list(cfg.top10_file);
    }
    report.subgroups = subgroup_report(report.rows, spec, in.samples, vocab);
  }

  if (!cfg.baseline.empty()) {
    require_file("baseline", cfg.baseline);
    auto base_preds = load_predictions(cfg.baseline);
    std::vector<std::pair<double, double>> bleu_pairs;
    std::vector<std::pair<double, double>> em_pairs;
    for (std::size_t i = 0; i < in.samples.size(); ++i) {
      auto it = base_preds.find(in.samples[i].id);
      if (it == base_preds.end()) continue;
      SampleRow base = score_sample(in.samples[i].id, it->second, in.references[i], vocab);
      bleu_pairs.emplace_back(report.rows[i].bleu, base.bleu);
      em_pairs.emplace_back(report.rows[i].em ? 1.0 : 0.0, base.em ? 1.0 : 0.0);
    }
    if (!bleu_pairs.empty()) {
      meta["wilcoxon_bleu_p"] = wilcoxon_signed_rank(bleu_pairs);
      meta["wilcoxon_em_p"] = wilcoxon_signed_rank(em_pairs);
      meta["baseline_pairs"] = bleu_pairs.size();
    }
  }

  write_file(out_path(cfg, "report.jsonl"), report_to_jsonl(report, meta));
  std::string table = render_report_table(report);
  write_file(out_path(cfg, "report.txt"), table);
  std::fputs(table.c_str(), stdout);
  if (meta.contains("wilcoxon_bleu_p")) {
    std::printf("wilcoxon vs baseline: BLEU p=%.6g, EM p=%.6g (%zu pairs)\n",
                meta["wilcoxon_bleu_p"].get<double>(), meta["wilcoxon_em_p"].get<double>(),
                meta["baseline_pairs"].get<std::size_t>());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int dispatch(const std::string& command, const RunConfig& cfg) {
  try {
    if (command == "dedup") return run_dedup(cfg);
    if (command == "preprocess") return run_preprocess(cfg);
    if (command == "build-kb") return run_build_kb(cfg);
    if (command == "adapt") return run_adapt(cfg);
    if (command == "train") return run_train(cfg);
    if (command == "predict") return run_predict(cfg);
    if (command == "evaluate") return run_evaluate(cfg);
    std::fprintf(stderr,
                 "unknown command '%s'\nusage: fidfix "
                 "{dedup|preprocess|build-kb|adapt|train|predict|evaluate} [flags]\n",
                 command.c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace fidfix::pipeline
