// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Scales are small enough for a single CPU core; every
// tolerance is embedded next to its check.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fidfix/context.hpp"
#include "fidfix/corpus.hpp"
#include "fidfix/cwe_kb.hpp"
#include "fidfix/gradcheck.hpp"
#include "fidfix/metrics.hpp"
#include "fidfix/model.hpp"
#include "fidfix/stats.hpp"
#include "fidfix/train.hpp"

using namespace fidfix;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("%s criterion %2d [%6.1fs] %s -- %s\n", pass ? "PASS" : "FAIL", number, seconds,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fixture_path(const std::string& name) {
  return std::string(FIDFIX_FIXTURE_DIR) + "/" + name;
}

// ---------------------------------------------------------------------------
// Shared synthetic tasks
// ---------------------------------------------------------------------------

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.ffn_dim = 32;
  cfg.vocab_size = 64;
  cfg.segment_len = 8;
  cfg.max_segments = 10;
  cfg.seed = 42;
  return cfg;
}

Segment raw_segment(std::vector<int> tokens, SegmentKind kind, int index = 0) {
  Segment s;
  s.tokens = std::move(tokens);
  s.kind = kind;
  s.index = index;
  return s;
}

ContextBundle tiny_rich_bundle() {
  ContextBundle b;
  b.code_segments.push_back(raw_segment({10, 11, 12, 13, 14}, SegmentKind::code, 0));
  b.code_segments.push_back(raw_segment({15, 16, 17}, SegmentKind::code, 1));
  b.ast_segments.push_back(raw_segment({20, 21, 22, 23}, SegmentKind::ast, 0));
  b.name_segment = raw_segment({30, 31}, SegmentKind::cwe_name);
  b.pair_segments.push_back(raw_segment({40, 41, 42}, SegmentKind::example_pair));
  b.pair_segments.push_back(raw_segment({43, 44}, SegmentKind::example_pair));
  b.pair_labels = {1, 0};
  b.target_tokens.ids = {50, 51, 52, 53};
  return b;
}

// Copy benchmark: 24-token stream in 3 segments of 8; a marker token is
// followed by the 3-token answer, planted in `answer_segment`. Only the
// first `keep_k` segments enter the bundle, mirroring a hard segment budget.
constexpr int kCopyMarker = 9;

ContextBundle copy_bundle(std::mt19937_64& rng, int answer_segment, int keep_k) {
  std::vector<int> stream(24);
  for (auto& t : stream) t = 10 + static_cast<int>(rng() % 20);
  int local = static_cast<int>(rng() % 5);
  int base = answer_segment * 8 + local;
  stream[static_cast<std::size_t>(base)] = kCopyMarker;
  std::vector<int> answer(3);
  for (int k = 0; k < 3; ++k) {
    answer[static_cast<std::size_t>(k)] = 33 + static_cast<int>(rng() % 30);
    stream[static_cast<std::size_t>(base + 1 + k)] = answer[static_cast<std::size_t>(k)];
  }
  ContextBundle b;
  for (int s = 0; s < keep_k && s < 3; ++s) {
    Segment seg;
    seg.kind = SegmentKind::code;
    seg.index = s;
    seg.tokens.assign(stream.begin() + s * 8, stream.begin() + (s + 1) * 8);
    b.code_segments.push_back(std::move(seg));
  }
  b.target_tokens.ids = answer;
  return b;
}

ModelConfig copy_model_config(int epochs, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.ffn_dim = 64;
  cfg.vocab_size = 64;
  cfg.segment_len = 8;
  cfg.max_segments = 4;
  cfg.seed = seed;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 16;
  cfg.epochs = epochs;
  return cfg;
}

struct CopyRun {
  double accuracy = 0.0;
  double per_sample_seconds = 0.0;
};

CopyRun run_copy_benchmark(int keep_k, int answer_mode, int epochs) {
  std::mt19937_64 rng(99);
  auto seg_of = [&](int i) { return answer_mode >= 0 ? answer_mode : i % 3; };
  std::vector<ContextBundle> train_set, test_set;
  for (int i = 0; i < 512; ++i) train_set.push_back(copy_bundle(rng, seg_of(i), keep_k));
  for (int i = 0; i < 100; ++i) test_set.push_back(copy_bundle(rng, seg_of(i), keep_k));
  FidModel model(copy_model_config(epochs));
  train(model, train_set, {});
  CopyRun out;
  auto t0 = Clock::now();
  double acc = 0.0;
  for (const auto& b : test_set) acc += token_accuracy(model.generate(b, 5), b.target_tokens);
  out.per_sample_seconds = seconds_since(t0) / static_cast<double>(test_set.size());
  out.accuracy = acc / static_cast<double>(test_set.size());
  return out;
}

// Synthetic repair corpus used by the overfit and adaptation criteria.
const char* kSynNames[] = {
    "alpha",   "beta",   "gamma",  "delta",   "epsilon", "zeta",     "eta",     "theta",
    "iota",    "kappa",  "lambda", "mu",      "nu",      "xi",       "omicron", "pi",
    "rho",     "sigma",  "tau",    "upsilon", "phi",     "chi",      "psi",     "omega",
    "ares",    "boreas", "cronus", "demeter", "eos",     "erebus",   "gaia",    "helios",
    "hera",    "hermes", "hestia", "hypnos",  "iris",    "metis",    "nike",    "notus",
    "oceanus", "pan",    "pontus", "selene",  "tethys",  "thanatos", "theia",   "triton",
    "tyche",   "zephyr"};

RepairSample synthetic_repair_sample(int id, int name_idx, int variant) {
  RepairSample s;
  std::string name = kSynNames[name_idx % 50];
  std::string c = std::to_string(variant % 7);
  const char* op = (variant % 2) ? "-" : "*";
  s.id = "syn" + std::to_string(id);
  s.source_fn = "int " + name + " ( ) {\nreturn n " + op + " " + c + " ;\n}";
  s.fixed_fn = "int " + name + " ( ) {\nreturn n + " + c + " ;\n}";
  s.cwe_type = "CWE-125";
  s.vuln_span = {{1, 1}};
  return s;
}

Vocabulary synthetic_vocab() {
  std::vector<std::string> texts;
  for (int i = 0; i < 50; ++i) {
    RepairSample s = synthetic_repair_sample(i, i, i);
    texts.push_back(s.source_fn);
    texts.push_back(s.fixed_fn);
    AstNodeSeq seq = linearize_dfs(parse_source(s.source_fn));
    texts.push_back(join(seq.entries, " "));
  }
  texts.push_back("0 1 2 3 4 5 6 7 8 Out of bounds Read");
  return build_vocabulary(texts, 400);
}

double exact_match_rate(const FidModel& model, const std::vector<ContextBundle>& data) {
  std::size_t hits = 0;
  for (const auto& b : data) {
    TokenSeq out = model.generate(b, b.target_tokens.size() + 4);
    if (out.ids == b.target_tokens.ids) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

void criterion1_gradient_correctness() {
  auto t0 = Clock::now();
  FidModel model(tiny_model_config());
  ContextBundle bundle = tiny_rich_bundle();
  double err = gradient_check(model, bundle, 1e-4, 200, 7);
  double secs = seconds_since(t0);
  bool pass = err < 1e-4 && secs < 60.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max relative error %.3e (< 1e-4) over >= 200 samples",
                err);
  report(1, "gradient correctness on the tiny configuration", pass, detail, secs);
}

void criterion2_loss_additivity() {
  auto t0 = Clock::now();
  bool pass = true;
  std::string detail = "total == l_repair + l_relevance on every batch; formula fixture ok";

  // Every batch of a short training run.
  std::mt19937_64 rng(3);
  std::vector<ContextBundle> data;
  for (int i = 0; i < 24; ++i) data.push_back(copy_bundle(rng, i % 3, 3));
  ModelConfig cfg = copy_model_config(2);
  cfg.batch_size = 5;
  FidModel model(cfg);
  TrainResult r = train(model, data, {});
  for (const auto& rec : r.trace) {
    if (rec.total != rec.l_repair + rec.l_relevance) {
      pass = false;
      detail = "batch record violates additivity at step " + std::to_string(rec.step);
    }
  }
  // Per-bundle loss breakdowns.
  FidModel probe(tiny_model_config());
  ContextBundle bundle = tiny_rich_bundle();
  LossBreakdown loss = probe.compute_loss(bundle);
  if (loss.total != loss.l_repair + loss.l_relevance) {
    pass = false;
    detail = "per-bundle breakdown violates additivity";
  }

  // Hand-computed 3-pair cross-entropy with forced p values.
  std::vector<double> scores = {0.5, 0.25, 0.9};
  std::vector<int> labels = {1, 0, 1};
  double hand = -std::log(0.5) - std::log(1.0 - 0.25) - std::log(0.9);
  if (std::abs(FidModel::relevance_loss_from_scores(scores, labels) - hand) > 1e-9) {
    pass = false;
    detail = "3-pair fixture deviates from the hand-computed sum";
  }
  // g = 1, p = 0.5 contributes ln 2 through the live path.
  Params& p = probe.params();
  p[p.find("rel.w1")].setZero();
  p[p.find("rel.b1")].setZero();
  p[p.find("rel.w2")].setZero();
  p[p.find("rel.b2")].setZero();
  ContextBundle one = tiny_rich_bundle();
  one.pair_segments.resize(1);
  one.pair_labels = {1};
  if (std::abs(probe.compute_loss(one).l_relevance - std::log(2.0)) > 1e-9) {
    pass = false;
    detail = "zeroed classifier does not contribute ln 2";
  }
  report(2, "loss additivity and formula fidelity", pass, detail, seconds_since(t0));
}

void criterion3_fid_length_extension() {
  auto t0 = Clock::now();
  CopyRun full = run_copy_benchmark(/*keep_k=*/4, /*answer_mode=*/2, /*epochs=*/80);
  CopyRun ablated = run_copy_benchmark(/*keep_k=*/1, /*answer_mode=*/2, /*epochs=*/80);
  double secs = seconds_since(t0);
  bool pass = full.accuracy >= 0.99 && ablated.accuracy < 0.50 && secs < 300.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "K=4 accuracy %.3f (>= 0.99), K=1 ablation %.3f (< 0.50)", full.accuracy,
                ablated.accuracy);
  report(3, "FiD length extension on the planted-copy task", pass, detail, secs);
}

void criterion4_overfit_learnability() {
  auto t0 = Clock::now();
  Vocabulary vocab = synthetic_vocab();
  KnowledgeBundle kb;
  kb.cwe_name = "Out of bounds Read";
  std::vector<ContextBundle> data;
  for (int i = 0; i < 50; ++i) {
    data.push_back(build_context(synthetic_repair_sample(i, i, i), kb, vocab, 10, 64));
  }
  ModelConfig cfg;
  cfg.d_model = 48;
  cfg.n_heads = 4;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.ffn_dim = 96;
  cfg.vocab_size = vocab.size();
  cfg.segment_len = 64;
  cfg.max_segments = 10;
  cfg.seed = 5;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 10;
  cfg.epochs = 400;  // 5 steps per epoch -> exactly 2,000 steps
  FidModel model(cfg);
  TrainResult r = train(model, data, {});
  double em = exact_match_rate(model, data);
  double secs = seconds_since(t0);
  bool pass = em >= 0.95 && r.trace.size() <= 2000 && secs < 600.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "training EM %.2f (>= 0.95) after %zu steps (<= 2000)",
                em, r.trace.size());
  report(4, "overfit learnability on 50 synthetic repairs", pass, detail, secs);
}

void criterion5_adaptation_benefit() {
  auto t0 = Clock::now();
  Vocabulary vocab = synthetic_vocab();
  KnowledgeBundle kb;
  kb.cwe_name = "Out of bounds Read";
  std::mt19937_64 rng(7);
  // Bug-fixing corpus: 200 random (name, constant, operator) combinations so
  // the fix can only be produced by reading the input.
  std::vector<BugFixPair> bugfix;
  for (int i = 0; i < 200; ++i) {
    std::string name = kSynNames[rng() % 50];
    std::string c = std::to_string(rng() % 9);
    const char* op = (rng() % 3 == 0) ? "*" : "-";
    bugfix.push_back({"int " + name + " ( ) {\nreturn n " + op + " " + c + " ;\n}",
                      "int " + name + " ( ) {\nreturn n + " + c + " ;\n}"});
  }
  std::vector<ContextBundle> ft_train, ft_valid;
  for (int i = 0; i < 32; ++i) {
    ft_train.push_back(build_context(
        synthetic_repair_sample(i, static_cast<int>(rng() % 50), static_cast<int>(rng() % 14)),
        kb, vocab, 10, 64));
  }
  for (int i = 0; i < 16; ++i) {
    ft_valid.push_back(build_context(
        synthetic_repair_sample(100 + i, static_cast<int>(rng() % 50),
                                static_cast<int>(rng() % 14)),
        kb, vocab, 10, 64));
  }

  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelConfig cfg;
    cfg.d_model = 32;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    cfg.ffn_dim = 64;
    cfg.vocab_size = vocab.size();
    cfg.segment_len = 64;
    cfg.max_segments = 10;
    cfg.seed = seed;
    cfg.learning_rate = 2e-3;
    cfg.batch_size = 8;
    cfg.epochs = 100;

    FidModel baseline(cfg);
    TrainResult rb = train(baseline, ft_train, ft_valid);

    ModelConfig adapt_cfg = cfg;
    adapt_cfg.epochs = 30;
    FidModel adapted(adapt_cfg);
    adapt_pretrain(adapted, bugfix, vocab);
    FidModel finetuned(cfg);
    finetuned.params() = adapted.params();
    TrainResult ra = train(finetuned, ft_train, ft_valid);

    if (ra.best_valid_em >= rb.best_valid_em) ++wins;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " s%llu:%.2f/%.2f", static_cast<unsigned long long>(seed),
                  ra.best_valid_em, rb.best_valid_em);
    per_seed += buf;
  }
  bool pass = wins >= 4;
  char detail[200];
  std::snprintf(detail, sizeof(detail), "adapted >= baseline on %d/5 seeds (adapted/baseline:%s)",
                wins, per_seed.c_str());
  report(5, "adaptation benefit direction", pass, detail, seconds_since(t0));
}

void criterion6_dedup_protocol() {
  auto t0 = Clock::now();
  DatasetSplits splits = load_dataset(fixture_path("planted_dedup.jsonl"));
  auto [deduped, rep] = deduplicate_splits(splits);
  bool pass = rep.removed_train == 3 && rep.removed_valid == 1 && rep.removed_test_internal == 1;

  // Exhaustive post-state scan.
  auto keys = [](const std::vector<RepairSample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(dedup_key(s));
    return out;
  };
  auto train_keys = keys(deduped.train), valid_keys = keys(deduped.valid),
       test_keys = keys(deduped.test);
  for (const auto& k : train_keys) {
    for (const auto& k2 : valid_keys) pass = pass && k != k2;
    for (const auto& k2 : test_keys) pass = pass && k != k2;
  }
  for (const auto& k : valid_keys) {
    for (const auto& k2 : test_keys) pass = pass && k != k2;
  }
  for (std::size_t i = 0; i < test_keys.size(); ++i) {
    for (std::size_t j = i + 1; j < test_keys.size(); ++j) {
      pass = pass && test_keys[i] != test_keys[j];
    }
  }
  auto [twice, rep2] = deduplicate_splits(deduped);
  pass = pass && rep2.removed_train == 0 && rep2.removed_valid == 0 &&
         rep2.removed_test_internal == 0;

  std::string detail = "planted report (3,1,1); clean post-state; idempotent";
  // Optional integration against the real merged dataset.
  if (const char* real = std::getenv("FIDFIX_REAL_DATASET")) {
    DatasetSplits real_splits = load_dataset(real);
    auto [real_dedup, real_rep] = deduplicate_splits(real_splits);
    bool table = real_rep.before_train == 5937 && real_rep.before_valid == 839 &&
                 real_rep.before_test == 1706 && real_rep.after_train == 3872 &&
                 real_rep.after_valid == 316 && real_rep.after_test == 1612;
    pass = pass && table;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "; real dataset %zu/%zu/%zu -> %zu/%zu/%zu",
                  real_rep.before_train, real_rep.before_valid, real_rep.before_test,
                  real_rep.after_train, real_rep.after_valid, real_rep.after_test);
    detail += buf;
  } else {
    detail += "; optional real-dataset check skipped (FIDFIX_REAL_DATASET unset)";
  }
  report(6, "three-step deduplication protocol", pass, detail, seconds_since(t0));
}

// Independent BLEU oracle, written directly from the formula.
double oracle_bleu(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
  if (pred.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::string, int> rc, pc;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      std::string key;
      for (std::size_t k = 0; k < n; ++k) key += ref[i + k] + "\x01";
      ++rc[key];
    }
    for (std::size_t i = 0; i + n <= pred.size(); ++i) {
      std::string key;
      for (std::size_t k = 0; k < n; ++k) key += pred[i + k] + "\x01";
      ++pc[key];
    }
    double matched = 0, total = 0;
    for (const auto& [key, count] : pc) {
      total += count;
      auto it = rc.find(key);
      if (it != rc.end()) matched += std::min(count, it->second);
    }
    double p = n == 1 ? (total == 0 ? 0.0 : matched / total)
                      : (matched == 0 ? 1.0 / (total + 1.0) : matched / total);
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p) / 4.0;
  }
  double bp = pred.size() >= ref.size() ? 1.0
                                        : std::exp(1.0 - static_cast<double>(ref.size()) /
                                                             static_cast<double>(pred.size()));
  return bp * std::exp(log_sum);
}

// Sign-assignment enumeration for the Wilcoxon exact branch.
double oracle_wilcoxon(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> abs_diffs;
  std::vector<bool> positive;
  for (const auto& [a, b] : pairs) {
    double d = a - b;
    if (d == 0.0) continue;
    abs_diffs.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  std::size_t n = abs_diffs.size();
  if (n == 0) return 1.0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_diffs[a] < abs_diffs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  double w = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (positive[k]) w += ranks[k];
  }
  std::size_t lower = 0, upper = 0, total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (mask & (std::size_t{1} << k)) sum += ranks[k];
    }
    if (sum <= w + 1e-12) ++lower;
    if (sum >= w - 1e-12) ++upper;
  }
  return std::min(1.0, 2.0 * static_cast<double>(std::min(lower, upper)) /
                           static_cast<double>(total));
}

void criterion7_metric_oracles() {
  auto t0 = Clock::now();
  bool pass = true;
  std::string detail = "EM, BLEU-4, CodeBLEU, and Wilcoxon match their oracles";
  auto fail = [&](const std::string& why) {
    pass = false;
    detail = why;
  };

  // Exact match.
  TokenSeq a, b;
  a.ids = {1, 2, 3};
  b.ids = a.ids;
  if (!exact_match(a, b) || !exact_match(b, a)) fail("exact_match identity/symmetry");
  b.ids[0] = 9;
  if (exact_match(a, b)) fail("exact_match on different ids");

  // BLEU identity, brevity penalty, disjoint unigrams.
  std::vector<std::string> ident = {"int", "x", "=", "0", ";"};
  if (std::abs(bleu4(ident, ident) - 1.0) > 1e-9) fail("bleu identity");
  std::vector<std::string> ref8 = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::vector<std::string> half(ref8.begin(), ref8.begin() + 4);
  if (std::abs(bleu4(half, ref8) - std::exp(-1.0)) > 1e-9) fail("brevity penalty e^{1-2}");
  std::vector<std::string> p5 = {"q", "w", "e", "r", "t"};
  std::vector<std::string> r5 = {"z", "x", "c", "v", "n"};
  if (!(bleu4(p5, r5) < 0.02)) fail("disjoint-unigram smoothing bound");

  // Random-fixture agreement with the independent oracle.
  std::mt19937_64 rng(2025);
  const char* pool[] = {"int",    "x", "y", "if",    "(", ")",   "{",  "}", "=", "+",
                        "return", "0", "1", "while", ";", "foo", "bar"};
  auto random_tokens = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::string> out;
    std::size_t n = lo + rng() % (hi - lo + 1);
    for (std::size_t k = 0; k < n; ++k) out.push_back(pool[rng() % std::size(pool)]);
    return out;
  };
  for (int iter = 0; iter < 200 && pass; ++iter) {
    auto pred = random_tokens(1, 30);
    auto ref = random_tokens(1, 30);
    if (std::abs(bleu4(pred, ref) - oracle_bleu(pred, ref)) > 1e-9) {
      fail("bleu deviates from the brute-force oracle");
    }
  }

  // CodeBLEU identity and the (1,0,0,0) projection.
  std::string prog = "int f(int a) { if (a < 0) { return 0; } return a; }";
  if (std::abs(codebleu(prog, prog) - 1.0) > 1e-9) fail("codebleu identity");
  CodeBleuWeights only_ngram{1.0, 0.0, 0.0, 0.0};
  for (int iter = 0; iter < 100 && pass; ++iter) {
    auto pred = random_tokens(1, 25);
    auto ref = random_tokens(1, 25);
    std::string pt = join(pred, " "), rt = join(ref, " ");
    double got = codebleu(pt, rt, only_ngram);
    double want = bleu4(word_tokens(pt), word_tokens(rt));
    if (std::abs(got - want) > 1e-9) fail("codebleu(1,0,0,0) != bleu4");
  }

  // Wilcoxon: n=6 all positive and enumeration agreement for n <= 10.
  std::vector<std::pair<double, double>> six;
  for (int k = 1; k <= 6; ++k) six.emplace_back(k + 0.5 * k, k);
  if (std::abs(wilcoxon_signed_rank(six) - 0.03125) > 1e-9) fail("wilcoxon n=6 exact p");
  std::uniform_int_distribution<int> val(-4, 4);
  for (int iter = 0; iter < 150 && pass; ++iter) {
    std::size_t n = 1 + rng() % 10;
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t k = 0; k < n; ++k) {
      pairs.emplace_back(static_cast<double>(val(rng)), static_cast<double>(val(rng)));
    }
    if (std::abs(wilcoxon_signed_rank(pairs) - oracle_wilcoxon(pairs)) > 1e-9) {
      fail("wilcoxon exact branch deviates from sign enumeration");
    }
  }
  report(7, "metric oracles", pass, detail, seconds_since(t0));
}

void criterion8_knowledge_assembly() {
  auto t0 = Clock::now();
  bool pass = true;
  std::string detail = "label soundness and ordering on 1000 fixtures; CWE-125 neighborhood ok";
  std::mt19937_64 rng(555);
  for (int iter = 0; iter < 1000 && pass; ++iter) {
    LoadedKb kb;
    int n = 3 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      CweEntry e;
      e.id = "CWE-" + std::to_string(i);
      e.name = "name" + std::to_string(i);
      e.load_index = static_cast<std::size_t>(i);
      kb.hierarchy.add_node(e.id);
      if (i > 0 && rng() % 3 != 0) {
        std::string parent = "CWE-" + std::to_string(rng() % static_cast<unsigned>(i));
        e.parents.push_back(parent);
        kb.hierarchy.add_edge(e.id, parent);
      }
      std::size_t n_ex = rng() % 3;
      for (std::size_t k = 0; k < n_ex; ++k) {
        e.examples.push_back({"code", "c", "analysis"});
        e.fixes.push_back("fix");
      }
      kb.kb.emplace(e.id, e);
    }
    std::string target = "CWE-" + std::to_string(rng() % static_cast<unsigned>(n));
    KnowledgeBundle bundle = assemble_knowledge(kb.kb, kb.hierarchy, target, rng() % 8);
    bool seen_zero = false;
    for (const auto& p : bundle.pairs) {
      if (p.label != (p.origin_cwe == target ? 1 : 0)) {
        pass = false;
        detail = "label soundness violated";
      }
      if (p.label == 0) seen_zero = true;
      if (seen_zero && p.label == 1) {
        pass = false;
        detail = "a label-0 pair precedes a label-1 pair";
      }
    }
  }

  // The CWE-125 fixture from the shipped knowledge base.
  LoadedKb kb = load_kb(fixture_path("demo_kb.jsonl"));
  auto children = kb.hierarchy.children("CWE-125");
  std::sort(children.begin(), children.end());
  if (children != std::vector<std::string>{"CWE-126", "CWE-127"}) {
    pass = false;
    detail = "children(CWE-125) != {CWE-126, CWE-127}";
  }
  report(8, "knowledge assembly", pass, detail, seconds_since(t0));
}

void criterion9_relevance_head() {
  auto t0 = Clock::now();
  // Linearly separable pair content: positives carry token 40, negatives 41.
  std::mt19937_64 rng(31);
  auto make_pair_segment = [&](int label) {
    std::vector<int> toks;
    for (int k = 0; k < 6; ++k) toks.push_back(10 + static_cast<int>(rng() % 20));
    toks[static_cast<std::size_t>(rng() % 6)] = label ? 40 : 41;
    return raw_segment(toks, SegmentKind::example_pair);
  };
  auto make_bundle = [&]() {
    ContextBundle b;
    b.code_segments.push_back(raw_segment({10, 11, 12, 13}, SegmentKind::code));
    for (int k = 0; k < 4; ++k) {
      int label = k < 2 ? 1 : 0;
      b.pair_segments.push_back(make_pair_segment(label));
      b.pair_labels.push_back(label);
    }
    b.target_tokens.ids = {50, 51};
    return b;
  };
  std::vector<ContextBundle> data;
  for (int i = 0; i < 64; ++i) data.push_back(make_bundle());

  ModelConfig cfg = copy_model_config(12);
  cfg.learning_rate = 1e-3;
  FidModel model(cfg);
  TrainResult r = train(model, data, {});

  // Smoothed (window 3) relevance loss must not increase across epochs.
  std::vector<double> smooth;
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    double acc = 0.0;
    int cnt = 0;
    for (std::size_t w = (e >= 2 ? e - 2 : 0); w <= e; ++w) {
      acc += r.epochs[w].relevance_loss;
      ++cnt;
    }
    smooth.push_back(acc / cnt);
  }
  bool monotone = true;
  for (std::size_t e = 1; e < smooth.size(); ++e) {
    if (smooth[e] > smooth[e - 1] + 1e-6) monotone = false;
  }

  // AUC on fresh pairs.
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    for (int label : {1, 0}) {
      Segment seg = make_pair_segment(label);
      scores.push_back(model.relevance_forward({model.encode_segment(seg)})[0]);
      labels.push_back(label);
    }
  }
  double auc = auc_score(scores, labels);
  bool pass = auc >= 0.95 && monotone;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "AUC %.4f (>= 0.95), smoothed relevance loss %s", auc,
                monotone ? "non-increasing" : "NOT monotone");
  report(9, "relevance head separability and loss trend", pass, detail, seconds_since(t0));
}

void criterion10_k_sweep() {
  auto t0 = Clock::now();
  double acc[5] = {0, 0, 0, 0, 0};
  double time_per_sample[5] = {0, 0, 0, 0, 0};
  for (int k = 1; k <= 4; ++k) {
    CopyRun run = run_copy_benchmark(k, /*answer_mode=*/-1, /*epochs=*/80);
    acc[k] = run.accuracy;
    time_per_sample[k] = run.per_sample_seconds;
  }
  // Coverage is reached at K=3 (answers sit in segments 1..3).
  bool monotone = acc[2] >= acc[1] - 0.02 && acc[3] >= acc[2] - 0.02;
  bool rising = acc[3] >= acc[1] + 0.30;
  bool flat = std::abs(acc[4] - acc[3]) <= 0.03;
  bool slower = time_per_sample[4] > time_per_sample[1];
  bool pass = monotone && rising && flat && slower;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "accuracy K1..K4 = %.3f/%.3f/%.3f/%.3f; per-sample time K1 %.4fs -> K4 %.4fs",
                acc[1], acc[2], acc[3], acc[4], time_per_sample[1], time_per_sample[4]);
  report(10, "K-sweep shape and inference cost", pass, detail, seconds_since(t0));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion1_gradient_correctness();
  criterion2_loss_additivity();
  criterion3_fid_length_extension();
  criterion4_overfit_learnability();
  criterion5_adaptation_benefit();
  criterion6_dedup_protocol();
  criterion7_metric_oracles();
  criterion8_knowledge_assembly();
  criterion9_relevance_head();
  criterion10_k_sweep();
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
