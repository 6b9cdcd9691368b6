#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fidfix/context.hpp"
#include "fidfix/model.hpp"

namespace fidfix {

struct StepRecord {
  int step = 0;
  double l_repair = 0.0;
  double l_relevance = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double relevance_loss = 0.0;
  double valid_em = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> trace;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_valid_em = 0.0;
};

// Adam with decoupled weight decay over the named tensor set.
class AdamOptimizer {
 public:
  AdamOptimizer(const Params& params, double lr, double weight_decay)
      : m_(params.zeros_like()), v_(params.zeros_like()), lr_(lr), wd_(weight_decay) {}

  void step(Params& params, const Params& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t h = 0; h < params.count(); ++h) {
      m_[h] = kBeta1 * m_[h] + (1.0 - kBeta1) * grads[h];
      v_[h] = kBeta2 * v_[h] + (1.0 - kBeta2) * grads[h].cwiseProduct(grads[h]);
      Mat mhat = m_[h] / bc1;
      Mat vhat = v_[h] / bc2;
      params[h] -= lr_ * (mhat.array() / (vhat.array().sqrt() + kEps)).matrix();
      if (wd_ > 0.0) params[h] -= (lr_ * wd_) * params[h];
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  Params m_, v_;
  double lr_, wd_;
  long t_ = 0;
};

inline double token_accuracy(const TokenSeq& pred, const TokenSeq& ref) {
  if (ref.ids.empty()) return pred.ids.empty() ? 1.0 : 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ref.ids.size(); ++i) {
    if (i < pred.ids.size() && pred.ids[i] == ref.ids[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ref.ids.size());
}

inline double validation_exact_match(const FidModel& model,
                                     const std::vector<ContextBundle>& valid) {
  if (valid.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& bundle : valid) {
    TokenSeq pred = model.generate(bundle, bundle.target_tokens.size() + 8);
    if (pred.ids == bundle.target_tokens.ids) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(valid.size());
}

// Mini-batch training with per-epoch validation. The model is left at the
// checkpoint with the best validation exact match (ties keep the earliest
// epoch); with an empty validation set the last epoch wins. Deterministic
// for a fixed config seed.
inline TrainResult train(FidModel& model, const std::vector<ContextBundle>& train_set,
                         const std::vector<ContextBundle>& valid_set) {
  if (train_set.empty()) throw InputError("train: empty dataset");
  const ModelConfig& cfg = model.config();
  AdamOptimizer opt(model.params(), cfg.learning_rate, cfg.weight_decay);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  Params best_params = model.params();
  bool have_best = false;
  int step = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0, epoch_rel = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      Params grads = model.params().zeros_like();
      double b_repair = 0.0, b_rel = 0.0, b_total = 0.0;
      for (std::size_t i = at; i < end; ++i) {
        LossBreakdown loss = model.compute_loss_and_grads(train_set[order[i]], grads);
        b_repair += loss.l_repair;
        b_rel += loss.l_relevance;
        b_total += loss.total;
      }
      const double scale = 1.0 / static_cast<double>(end - at);
      for (std::size_t h = 0; h < grads.count(); ++h) grads[h] *= scale;
      ++step;
      StepRecord rec{step, b_repair * scale, b_rel * scale, 0.0};
      rec.total = rec.l_repair + rec.l_relevance;
      if (!std::isfinite(rec.total) || !std::isfinite(b_total)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      }
      opt.step(model.params(), grads);
      result.trace.push_back(rec);
      epoch_loss += rec.total;
      epoch_rel += rec.l_relevance;
      ++batches;
    }
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
    er.relevance_loss = batches ? epoch_rel / static_cast<double>(batches) : 0.0;
    er.valid_em = validation_exact_match(model, valid_set);
    result.epochs.push_back(er);
    if (!valid_set.empty()) {
      if (!have_best || er.valid_em > result.best_valid_em) {
        result.best_valid_em = er.valid_em;
        result.best_epoch = epoch;
        best_params = model.params();
        have_best = true;
      }
    } else {
      result.best_epoch = epoch;
      best_params = model.params();
      have_best = true;
    }
  }
  if (have_best) model.params() = best_params;
  return result;
}

// ---------------------------------------------------------------------------
// Model adaptation on a bug-fixing corpus
// ---------------------------------------------------------------------------

struct BugFixPair {
  std::string buggy;
  std::string fixed;
};

// Builds single-segment adaptation bundles: even corpus indices feed the raw
// code, odd indices the linearized AST of the same code; both views are
// truncated to the first L tokens. No knowledge slots are attached.
inline std::vector<ContextBundle> adaptation_bundles(const std::vector<BugFixPair>& corpus,
                                                     const Vocabulary& vocab, int segment_len) {
  std::vector<ContextBundle> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& pair = corpus[i];
    if (pair.fixed.empty()) {
      throw InputError("adaptation corpus entry " + std::to_string(i) + " has an empty fix");
    }
    TokenSeq input;
    if (i % 2 == 0) {
      input = tokenize(pair.buggy, vocab, Provenance::code);
    } else {
      input = ast_token_stream(linearize_dfs(parse_source(pair.buggy)), vocab);
    }
    if (input.ids.size() > static_cast<std::size_t>(segment_len)) {
      input.ids.resize(static_cast<std::size_t>(segment_len));
    }
    ContextBundle bundle;
    Segment seg;
    seg.tokens = input.ids;
    seg.index = 0;
    seg.kind = i % 2 == 0 ? SegmentKind::code : SegmentKind::ast;
    if (seg.kind == SegmentKind::code) {
      bundle.code_segments.push_back(std::move(seg));
    } else {
      bundle.ast_segments.push_back(std::move(seg));
    }
    bundle.target_tokens = tokenize(pair.fixed, vocab, Provenance::code);
    out.push_back(std::move(bundle));
  }
  return out;
}

inline TrainResult adapt_pretrain(FidModel& model, const std::vector<BugFixPair>& corpus,
                                  const Vocabulary& vocab) {
  auto bundles = adaptation_bundles(corpus, vocab, model.config().segment_len);
  return train(model, bundles, {});
}

}  // namespace fidfix
