#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "fidfix/common.hpp"
#include "fidfix/context.hpp"
#include "fidfix/preprocess.hpp"

namespace fidfix {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int ffn_dim = 128;
  int vocab_size = 0;
  int segment_len = 512;  // L
  int max_segments = 10;  // K
  std::uint64_t seed = 7;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  int batch_size = 64;
  int epochs = 20;

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
      throw InputError("model config: d_model must be a positive multiple of n_heads");
    }
    if (segment_len < 1) throw InputError("model config: segment_len must be >= 1");
    if (max_segments < 1) throw InputError("model config: max_segments must be >= 1");
    if (vocab_size <= 0) throw InputError("model config: vocab_size must be positive");
    if (n_enc_layers < 1 || n_dec_layers < 1 || ffn_dim < 1) {
      throw InputError("model config: layer sizes must be positive");
    }
  }
};

struct LossBreakdown {
  double l_repair = 0.0;
  double l_relevance = 0.0;
  double total = 0.0;
};

// Named trainable tensors with stable registration order.
class Params {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.emplace_back(Mat::Zero(rows, cols));
    return tensors_.size() - 1;
  }

  Mat& operator[](std::size_t h) { return tensors_[h]; }
  const Mat& operator[](std::size_t h) const { return tensors_[h]; }

  std::size_t count() const { return tensors_.size(); }
  const std::string& name(std::size_t h) const { return names_[h]; }

  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown tensor: " + name);
    return it->second;
  }

  Params zeros_like() const {
    Params out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      out.add(names_[i], tensors_[i].rows(), tensors_[i].cols());
    }
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) t.setZero();
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
  }

  // Flat element addressing across tensors in registration order.
  std::pair<std::size_t, Eigen::Index> locate(std::size_t flat) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      auto sz = static_cast<std::size_t>(tensors_[i].size());
      if (flat < sz) return {i, static_cast<Eigen::Index>(flat)};
      flat -= sz;
    }
    throw InputError("flat index out of range");
  }

  double get_flat(std::size_t flat) const {
    auto [t, off] = locate(flat);
    return tensors_[t].data()[off];
  }

  void add_flat(std::size_t flat, double delta) {
    auto [t, off] = locate(flat);
    tensors_[t].data()[off] += delta;
  }

  bool all_finite() const {
    for (const auto& t : tensors_) {
      if (!t.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Row-wise concatenation of per-slot contextual embeddings.
inline Mat fuse(const std::vector<Mat>& embeddings) {
  Eigen::Index cols = -1, rows = 0;
  for (const auto& e : embeddings) {
    if (cols < 0) {
      cols = e.cols();
    } else if (e.cols() != cols && e.rows() > 0) {
      throw InputError("fuse: mismatched embedding width");
    }
    rows += e.rows();
  }
  if (cols < 0) cols = 0;
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& e : embeddings) {
    if (e.rows() == 0) continue;
    out.middleRows(at, e.rows()) = e;
    at += e.rows();
  }
  return out;
}

namespace nn {

struct LnCache {
  Mat xhat;
  Vec inv_std;
};

struct AttnCache {
  Mat zq, zkv;      // layer inputs feeding the projections
  Mat q, k, v;      // projected
  Mat heads_out;    // concatenated per-head outputs, pre-Wo
  std::vector<Mat> probs;  // per-head attention rows
};

struct FfnCache {
  Mat z_in;
  Mat h_pre;  // pre-activation of the hidden layer
};

constexpr double kLnEps = 1e-5;

inline Mat layernorm_forward(const Mat& x, const Mat& g, const Mat& b, LnCache& cache) {
  const Eigen::Index t = x.rows(), d = x.cols();
  cache.xhat.resize(t, d);
  cache.inv_std.resize(t);
  Mat out(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    double mean = x.row(i).mean();
    double var = (x.row(i).array() - mean).square().mean();
    double inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mean) * inv;
    out.row(i) = cache.xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
  }
  return out;
}

inline Mat layernorm_backward(const Mat& dy, const Mat& g, const LnCache& cache, Mat& dg, Mat& db) {
  const Eigen::Index t = dy.rows(), d = dy.cols();
  Mat dx(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(g.row(0));
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) =
        (dxhat.array() - m1 - cache.xhat.row(i).array() * m2) * cache.inv_std(i);
    dg.row(0) += dy.row(i).cwiseProduct(cache.xhat.row(i));
    db.row(0) += dy.row(i);
  }
  return dx;
}

inline Mat softmax_rows(const Mat& s) {
  Mat p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double m = s.row(i).maxCoeff();
    Eigen::RowVectorXd e = (s.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

inline Mat softmax_rows_backward(const Mat& p, const Mat& dp) {
  Mat ds(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double dot = p.row(i).dot(dp.row(i));
    ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
  }
  return ds;
}

}  // namespace nn

// Encoder-decoder transformer with per-segment encoding, fused decoder
// cross-attention, and a relevance classifier over pair slots. Pre-norm
// residual blocks; sinusoidal positions restart at 0 in every segment.
class FidModel {
 public:
  explicit FidModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    register_params();
    init_params();
  }

  const ModelConfig& config() const { return cfg_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  // -- public operations ----------------------------------------------------

  Mat encode_segment(const Segment& seg) const {
    if (static_cast<int>(seg.tokens.size()) > cfg_.segment_len) {
      throw InputError("encode_segment: segment exceeds the token budget");
    }
    StackCache cache;
    return encoder_forward(seg.tokens, cache);
  }

  std::vector<double> relevance_forward(const std::vector<Mat>& pair_embeddings) const {
    std::vector<double> scores;
    scores.reserve(pair_embeddings.size());
    for (const auto& e : pair_embeddings) {
      RelCache cache;
      scores.push_back(relevance_score(e, cache));
    }
    return scores;
  }

  LossBreakdown compute_loss(const ContextBundle& bundle) const {
    BundleCache cache;
    return forward_loss(bundle, cache);
  }

  LossBreakdown compute_loss_and_grads(const ContextBundle& bundle, Params& grads) const {
    BundleCache cache;
    LossBreakdown loss = forward_loss(bundle, cache);
    backward(bundle, cache, grads);
    return loss;
  }

  // Greedy decoding; ties resolve to the lowest token id. Stops at <eos> or
  // max_len. The returned sequence excludes <bos>/<eos>.
  TokenSeq generate(const ContextBundle& bundle, std::size_t max_len) const {
    Mat c_enc = encode_context(bundle);
    TokenSeq out;
    std::vector<int> dec_input{kBosId};
    for (std::size_t step = 0; step < max_len; ++step) {
      StackCache cache;
      Mat logits = decoder_forward(dec_input, c_enc, cache);
      Eigen::Index best = 0;
      double best_v = -std::numeric_limits<double>::infinity();
      for (Eigen::Index v = 0; v < logits.cols(); ++v) {
        double x = logits(logits.rows() - 1, v);
        if (x > best_v) {
          best_v = x;
          best = v;
        }
      }
      if (best == kEosId) break;
      out.ids.push_back(static_cast<int>(best));
      dec_input.push_back(static_cast<int>(best));
    }
    return out;
  }

  // Fused encoder matrix for a bundle, slots in I; A; D; E order.
  Mat encode_context(const ContextBundle& bundle) const {
    std::vector<Mat> mats;
    for (const Segment* seg : bundle.slots()) {
      StackCache cache;
      mats.push_back(encoder_forward(seg->tokens, cache));
    }
    return fuse(mats);
  }

  // Relevance cross-entropy from probability scores; the training path goes
  // through the numerically stable logit form and matches this sum.
  static double relevance_loss_from_scores(const std::vector<double>& scores,
                                           const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw InputError("relevance loss: size mismatch");
    double loss = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      double p = scores[k];
      loss += labels[k] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss;
  }

 private:
  // -- parameter registration -----------------------------------------------

  struct LnH {
    std::size_t g, b;
  };
  struct AttnH {
    std::size_t wq, wk, wv, wo;
  };
  struct FfnH {
    std::size_t w1, b1, w2, b2;
  };
  struct EncLayerH {
    LnH ln1;
    AttnH attn;
    LnH ln2;
    FfnH ffn;
  };
  struct DecLayerH {
    LnH ln1;
    AttnH self_attn;
    LnH ln2;
    AttnH cross_attn;
    LnH ln3;
    FfnH ffn;
  };

  LnH add_ln(const std::string& prefix) {
    return {params_.add(prefix + ".g", 1, cfg_.d_model), params_.add(prefix + ".b", 1, cfg_.d_model)};
  }
  AttnH add_attn(const std::string& prefix) {
    const int d = cfg_.d_model;
    return {params_.add(prefix + ".wq", d, d), params_.add(prefix + ".wk", d, d),
            params_.add(prefix + ".wv", d, d), params_.add(prefix + ".wo", d, d)};
  }
  FfnH add_ffn(const std::string& prefix) {
    const int d = cfg_.d_model, f = cfg_.ffn_dim;
    return {params_.add(prefix + ".w1", d, f), params_.add(prefix + ".b1", 1, f),
            params_.add(prefix + ".w2", f, d), params_.add(prefix + ".b2", 1, d)};
  }

  void register_params() {
    embed_ = params_.add("embed.tok", cfg_.vocab_size, cfg_.d_model);
    for (int l = 0; l < cfg_.n_enc_layers; ++l) {
      std::string p = "enc." + std::to_string(l);
      enc_layers_.push_back({add_ln(p + ".ln1"), add_attn(p + ".attn"), add_ln(p + ".ln2"),
                             add_ffn(p + ".ffn")});
    }
    enc_lnf_ = add_ln("enc.lnf");
    for (int l = 0; l < cfg_.n_dec_layers; ++l) {
      std::string p = "dec." + std::to_string(l);
      dec_layers_.push_back({add_ln(p + ".ln1"), add_attn(p + ".self"), add_ln(p + ".ln2"),
                             add_attn(p + ".cross"), add_ln(p + ".ln3"), add_ffn(p + ".ffn")});
    }
    dec_lnf_ = add_ln("dec.lnf");
    out_w_ = params_.add("out.w", cfg_.d_model, cfg_.vocab_size);
    out_b_ = params_.add("out.b", 1, cfg_.vocab_size);
    rel_w1_ = params_.add("rel.w1", cfg_.d_model, cfg_.d_model);
    rel_b1_ = params_.add("rel.b1", 1, cfg_.d_model);
    rel_w2_ = params_.add("rel.w2", cfg_.d_model, 1);
    rel_b2_ = params_.add("rel.b2", 1, 1);
  }

  void init_params() {
    std::mt19937_64 rng(cfg_.seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (std::size_t h = 0; h < params_.count(); ++h) {
      const std::string& n = params_.name(h);
      Mat& t = params_[h];
      if (n.ends_with(".g")) {
        t.setOnes();
      } else if (n.ends_with(".b") || n.ends_with(".b1") || n.ends_with(".b2")) {
        t.setZero();
      } else {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
      }
    }
  }

  // -- forward/backward machinery --------------------------------------------

  struct EncLayerCache {
    nn::LnCache ln1;
    nn::AttnCache attn;
    nn::LnCache ln2;
    nn::FfnCache ffn;
  };
  struct DecLayerCache {
    nn::LnCache ln1;
    nn::AttnCache self_attn;
    nn::LnCache ln2;
    nn::AttnCache cross;
    nn::LnCache ln3;
    nn::FfnCache ffn;
  };

  struct StackCache {
    std::vector<int> tokens;
    std::vector<EncLayerCache> enc_layers;
    std::vector<DecLayerCache> dec_layers;
    nn::LnCache lnf;
    Mat final_in;   // input of the final layernorm
    Mat final_out;  // normed output (decoder: pre-projection)
  };

  struct RelCache {
    Mat pooled;  // 1 x d
    Mat h_pre;   // 1 x d, pre-relu
    double z = 0.0;
    double p = 0.5;
  };

  struct BundleCache {
    std::vector<const Segment*> slots;
    std::vector<StackCache> slot_caches;
    std::vector<Mat> slot_outputs;
    std::vector<Eigen::Index> slot_offsets;  // row offset of each slot in c_enc
    Mat c_enc;
    StackCache dec;
    Mat logits;
    Mat probs;  // softmax of logits
    std::vector<int> dec_input;
    std::vector<int> labels;
    std::vector<std::size_t> pair_slot_indices;
    std::vector<RelCache> rel;
  };

  Mat embed_tokens(const std::vector<int>& tokens) const {
    const Mat& e = params_[embed_];
    const double scale = std::sqrt(static_cast<double>(cfg_.d_model));
    Mat x(static_cast<Eigen::Index>(tokens.size()), cfg_.d_model);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      int id = tokens[t];
      if (id < 0 || id >= cfg_.vocab_size) {
        throw InputError("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(cfg_.vocab_size));
      }
      x.row(static_cast<Eigen::Index>(t)) = e.row(id) * scale;
    }
    add_positions(x);
    return x;
  }

  void add_positions(Mat& x) const {
    const Eigen::Index d = x.cols();
    for (Eigen::Index pos = 0; pos < x.rows(); ++pos) {
      for (Eigen::Index i = 0; i < d; i += 2) {
        double angle = static_cast<double>(pos) /
                       std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
        x(pos, i) += std::sin(angle);
        if (i + 1 < d) x(pos, i + 1) += std::cos(angle);
      }
    }
  }

  Mat attention_forward(const Mat& zq, const Mat& zkv, const AttnH& h, bool causal,
                        nn::AttnCache& cache) const {
    const int heads = cfg_.n_heads;
    const Eigen::Index dh = cfg_.d_model / heads;
    cache.zq = zq;
    cache.zkv = zkv;
    if (zkv.rows() == 0 || zq.rows() == 0) {
      cache.q.resize(zq.rows(), cfg_.d_model);
      cache.k.resize(0, cfg_.d_model);
      cache.v.resize(0, cfg_.d_model);
      cache.heads_out = Mat::Zero(zq.rows(), cfg_.d_model);
      cache.probs.assign(static_cast<std::size_t>(heads), Mat());
      return Mat::Zero(zq.rows(), cfg_.d_model);
    }
    cache.q = zq * params_[h.wq];
    cache.k = zkv * params_[h.wk];
    cache.v = zkv * params_[h.wv];
    cache.heads_out.resize(zq.rows(), cfg_.d_model);
    cache.probs.resize(static_cast<std::size_t>(heads));
    const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hd = 0; hd < heads; ++hd) {
      auto qh = cache.q.middleCols(hd * dh, dh);
      auto kh = cache.k.middleCols(hd * dh, dh);
      auto vh = cache.v.middleCols(hd * dh, dh);
      Mat scores = qh * kh.transpose() * alpha;
      if (causal) {
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
          for (Eigen::Index j = i + 1; j < scores.cols(); ++j) {
            scores(i, j) = -std::numeric_limits<double>::infinity();
          }
        }
      }
      Mat p = nn::softmax_rows(scores);
      cache.probs[static_cast<std::size_t>(hd)] = p;
      cache.heads_out.middleCols(hd * dh, dh) = p * vh;
    }
    return cache.heads_out * params_[h.wo];
  }

  // Returns gradient wrt zq; accumulates the zkv gradient into dzkv.
  Mat attention_backward(const Mat& dout, const AttnH& h, const nn::AttnCache& cache,
                         Params& grads, Mat& dzkv) const {
    const int heads = cfg_.n_heads;
    const Eigen::Index dh = cfg_.d_model / heads;
    if (cache.zkv.rows() == 0 || cache.zq.rows() == 0) {
      return Mat::Zero(cache.zq.rows(), cfg_.d_model);
    }
    grads[h.wo] += cache.heads_out.transpose() * dout;
    Mat dheads = dout * params_[h.wo].transpose();
    Mat dq(cache.q.rows(), cfg_.d_model), dk(cache.k.rows(), cfg_.d_model),
        dv(cache.v.rows(), cfg_.d_model);
    const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hd = 0; hd < heads; ++hd) {
      auto qh = cache.q.middleCols(hd * dh, dh);
      auto kh = cache.k.middleCols(hd * dh, dh);
      auto vh = cache.v.middleCols(hd * dh, dh);
      const Mat& p = cache.probs[static_cast<std::size_t>(hd)];
      Mat doh = dheads.middleCols(hd * dh, dh);
      Mat dp = doh * vh.transpose();
      Mat dvh = p.transpose() * doh;
      Mat ds = nn::softmax_rows_backward(p, dp);
      dq.middleCols(hd * dh, dh) = ds * kh * alpha;
      dk.middleCols(hd * dh, dh) = ds.transpose() * qh * alpha;
      dv.middleCols(hd * dh, dh) = dvh;
    }
    grads[h.wq] += cache.zq.transpose() * dq;
    grads[h.wk] += cache.zkv.transpose() * dk;
    grads[h.wv] += cache.zkv.transpose() * dv;
    dzkv += dk * params_[h.wk].transpose() + dv * params_[h.wv].transpose();
    return dq * params_[h.wq].transpose();
  }

  Mat ffn_forward(const Mat& z, const FfnH& h, nn::FfnCache& cache) const {
    cache.z_in = z;
    cache.h_pre = (z * params_[h.w1]).rowwise() + params_[h.b1].row(0);
    Mat act = cache.h_pre.cwiseMax(0.0);
    return (act * params_[h.w2]).rowwise() + params_[h.b2].row(0);
  }

  Mat ffn_backward(const Mat& dout, const FfnH& h, const nn::FfnCache& cache, Params& grads) const {
    Mat act = cache.h_pre.cwiseMax(0.0);
    grads[h.w2] += act.transpose() * dout;
    grads[h.b2].row(0) += dout.colwise().sum();
    Mat dact = dout * params_[h.w2].transpose();
    Mat dpre = (cache.h_pre.array() > 0.0).select(dact, 0.0);
    grads[h.w1] += cache.z_in.transpose() * dpre;
    grads[h.b1].row(0) += dpre.colwise().sum();
    return dpre * params_[h.w1].transpose();
  }

  Mat encoder_forward(const std::vector<int>& tokens, StackCache& cache) const {
    cache.tokens = tokens;
    if (tokens.empty()) {
      cache.final_out = Mat(0, cfg_.d_model);
      return cache.final_out;
    }
    Mat x = embed_tokens(tokens);
    cache.enc_layers.resize(enc_layers_.size());
    for (std::size_t l = 0; l < enc_layers_.size(); ++l) {
      const EncLayerH& h = enc_layers_[l];
      EncLayerCache& lc = cache.enc_layers[l];
      Mat z1 = nn::layernorm_forward(x, params_[h.ln1.g], params_[h.ln1.b], lc.ln1);
      x += attention_forward(z1, z1, h.attn, false, lc.attn);
      Mat z2 = nn::layernorm_forward(x, params_[h.ln2.g], params_[h.ln2.b], lc.ln2);
      x += ffn_forward(z2, h.ffn, lc.ffn);
    }
    cache.final_in = x;
    cache.final_out =
        nn::layernorm_forward(x, params_[enc_lnf_.g], params_[enc_lnf_.b], cache.lnf);
    return cache.final_out;
  }

  void encoder_backward(const Mat& dout, const StackCache& cache, Params& grads) const {
    if (cache.tokens.empty()) return;
    Mat dx = nn::layernorm_backward(dout, params_[enc_lnf_.g], cache.lnf, grads[enc_lnf_.g],
                                    grads[enc_lnf_.b]);
    for (std::size_t l = enc_layers_.size(); l-- > 0;) {
      const EncLayerH& h = enc_layers_[l];
      const EncLayerCache& lc = cache.enc_layers[l];
      Mat dz2 = ffn_backward(dx, h.ffn, lc.ffn, grads);
      Mat dmid = nn::layernorm_backward(dz2, params_[h.ln2.g], lc.ln2, grads[h.ln2.g],
                                        grads[h.ln2.b]);
      dx += dmid;
      Mat dz1_kv = Mat::Zero(dx.rows(), cfg_.d_model);
      Mat dz1 = attention_backward(dx, h.attn, lc.attn, grads, dz1_kv);
      dz1 += dz1_kv;
      Mat din = nn::layernorm_backward(dz1, params_[h.ln1.g], lc.ln1, grads[h.ln1.g],
                                       grads[h.ln1.b]);
      dx += din;
    }
    embed_backward(cache.tokens, dx, grads);
  }

  void embed_backward(const std::vector<int>& tokens, const Mat& dx, Params& grads) const {
    const double scale = std::sqrt(static_cast<double>(cfg_.d_model));
    Mat& ge = grads[embed_];
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      ge.row(tokens[t]) += dx.row(static_cast<Eigen::Index>(t)) * scale;
    }
  }

  Mat decoder_forward(const std::vector<int>& tokens, const Mat& c_enc, StackCache& cache) const {
    cache.tokens = tokens;
    Mat x = embed_tokens(tokens);
    cache.dec_layers.resize(dec_layers_.size());
    for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
      const DecLayerH& h = dec_layers_[l];
      DecLayerCache& lc = cache.dec_layers[l];
      Mat z1 = nn::layernorm_forward(x, params_[h.ln1.g], params_[h.ln1.b], lc.ln1);
      x += attention_forward(z1, z1, h.self_attn, true, lc.self_attn);
      Mat z2 = nn::layernorm_forward(x, params_[h.ln2.g], params_[h.ln2.b], lc.ln2);
      x += attention_forward(z2, c_enc, h.cross_attn, false, lc.cross);
      Mat z3 = nn::layernorm_forward(x, params_[h.ln3.g], params_[h.ln3.b], lc.ln3);
      x += ffn_forward(z3, h.ffn, lc.ffn);
    }
    cache.final_in = x;
    cache.final_out =
        nn::layernorm_forward(x, params_[dec_lnf_.g], params_[dec_lnf_.b], cache.lnf);
    return (cache.final_out * params_[out_w_]).rowwise() + params_[out_b_].row(0);
  }

  // Backward through the decoder; returns nothing but accumulates parameter
  // gradients and the fused-context gradient into dc_enc.
  void decoder_backward(const Mat& dlogits, const StackCache& cache, Params& grads,
                        Mat& dc_enc) const {
    grads[out_w_] += cache.final_out.transpose() * dlogits;
    grads[out_b_].row(0) += dlogits.colwise().sum();
    Mat dout = dlogits * params_[out_w_].transpose();
    Mat dx = nn::layernorm_backward(dout, params_[dec_lnf_.g], cache.lnf, grads[dec_lnf_.g],
                                    grads[dec_lnf_.b]);
    for (std::size_t l = dec_layers_.size(); l-- > 0;) {
      const DecLayerH& h = dec_layers_[l];
      const DecLayerCache& lc = cache.dec_layers[l];
      Mat dz3 = ffn_backward(dx, h.ffn, lc.ffn, grads);
      dx += nn::layernorm_backward(dz3, params_[h.ln3.g], lc.ln3, grads[h.ln3.g], grads[h.ln3.b]);
      Mat dz2 = attention_backward(dx, h.cross_attn, lc.cross, grads, dc_enc);
      dx += nn::layernorm_backward(dz2, params_[h.ln2.g], lc.ln2, grads[h.ln2.g], grads[h.ln2.b]);
      Mat dz1_kv = Mat::Zero(dx.rows(), cfg_.d_model);
      Mat dz1 = attention_backward(dx, h.self_attn, lc.self_attn, grads, dz1_kv);
      dz1 += dz1_kv;
      dx += nn::layernorm_backward(dz1, params_[h.ln1.g], lc.ln1, grads[h.ln1.g], grads[h.ln1.b]);
    }
    embed_backward(cache.tokens, dx, grads);
  }

  double relevance_score(const Mat& slot_out, RelCache& cache) const {
    if (slot_out.rows() == 0) {
      cache.pooled = Mat::Zero(1, cfg_.d_model);
    } else {
      cache.pooled = slot_out.colwise().mean();
    }
    cache.h_pre = cache.pooled * params_[rel_w1_] + params_[rel_b1_];
    Mat act = cache.h_pre.cwiseMax(0.0);
    cache.z = (act * params_[rel_w2_])(0, 0) + params_[rel_b2_](0, 0);
    cache.p = 1.0 / (1.0 + std::exp(-cache.z));
    return cache.p;
  }

  // dz is dLoss/dz for this pair; returns dLoss/d(slot output rows).
  Mat relevance_backward(double dz, const RelCache& cache, Eigen::Index slot_rows,
                         Params& grads) const {
    Mat act = cache.h_pre.cwiseMax(0.0);
    grads[rel_w2_] += act.transpose() * dz;
    grads[rel_b2_](0, 0) += dz;
    Mat dact = dz * params_[rel_w2_].transpose();  // 1 x d
    Mat dpre = (cache.h_pre.array() > 0.0).select(dact, 0.0);
    grads[rel_w1_] += cache.pooled.transpose() * dpre;
    grads[rel_b1_].row(0) += dpre.row(0);
    Mat dpooled = dpre * params_[rel_w1_].transpose();
    if (slot_rows == 0) return Mat(0, cfg_.d_model);
    return (dpooled.row(0) / static_cast<double>(slot_rows)).replicate(slot_rows, 1);
  }

  LossBreakdown forward_loss(const ContextBundle& bundle, BundleCache& cache) const {
    if (bundle.target_tokens.empty()) throw InputError("compute_loss: empty target");
    if (bundle.pair_labels.size() != bundle.pair_segments.size()) {
      throw InputError("compute_loss: labels not aligned with pair segments");
    }
    cache.slots = bundle.slots();
    cache.slot_caches.resize(cache.slots.size());
    cache.slot_outputs.resize(cache.slots.size());
    cache.slot_offsets.resize(cache.slots.size());
    Eigen::Index offset = 0;
    for (std::size_t s = 0; s < cache.slots.size(); ++s) {
      if (static_cast<int>(cache.slots[s]->tokens.size()) > cfg_.segment_len) {
        throw InputError("compute_loss: segment exceeds the token budget");
      }
      cache.slot_outputs[s] = encoder_forward(cache.slots[s]->tokens, cache.slot_caches[s]);
      cache.slot_offsets[s] = offset;
      offset += cache.slot_outputs[s].rows();
      if (cache.slots[s]->kind == SegmentKind::example_pair) {
        cache.pair_slot_indices.push_back(s);
      }
    }
    cache.c_enc = fuse(cache.slot_outputs);

    // Teacher forcing: shift-right input, labels end with <eos>.
    cache.dec_input.assign(1, kBosId);
    cache.dec_input.insert(cache.dec_input.end(), bundle.target_tokens.ids.begin(),
                           bundle.target_tokens.ids.end());
    cache.labels = bundle.target_tokens.ids;
    cache.labels.push_back(kEosId);

    cache.logits = decoder_forward(cache.dec_input, cache.c_enc, cache.dec);
    const Eigen::Index t_steps = cache.logits.rows();
    cache.probs.resize(t_steps, cache.logits.cols());
    // Loss reductions accumulate in extended precision so finite-difference
    // probes of the total loss stay well conditioned.
    long double nll = 0.0L;
    for (Eigen::Index t = 0; t < t_steps; ++t) {
      double m = cache.logits.row(t).maxCoeff();
      Eigen::RowVectorXd shifted = cache.logits.row(t).array() - m;
      long double sum = 0.0L;
      for (Eigen::Index v = 0; v < shifted.size(); ++v) {
        sum += std::exp(static_cast<long double>(shifted(v)));
      }
      long double lse = std::log(sum);
      cache.probs.row(t) = (shifted.array() - static_cast<double>(lse)).exp();
      nll -= static_cast<long double>(shifted(cache.labels[static_cast<std::size_t>(t)])) - lse;
    }

    LossBreakdown loss;
    loss.l_repair = static_cast<double>(nll / static_cast<long double>(t_steps));
    cache.rel.resize(cache.pair_slot_indices.size());
    long double rel_sum = 0.0L;
    for (std::size_t k = 0; k < cache.pair_slot_indices.size(); ++k) {
      std::size_t s = cache.pair_slot_indices[k];
      relevance_score(cache.slot_outputs[s], cache.rel[k]);
      int g = bundle.pair_labels[k];
      long double z = cache.rel[k].z;
      // Stable BCE on the logit.
      rel_sum += std::max(z, 0.0L) - static_cast<long double>(g) * z +
                 std::log1p(std::exp(-std::abs(z)));
    }
    loss.l_relevance = static_cast<double>(rel_sum);
    loss.total = loss.l_repair + loss.l_relevance;
    return loss;
  }

  void backward(const ContextBundle& bundle, const BundleCache& cache, Params& grads) const {
    const Eigen::Index t_steps = cache.logits.rows();
    Mat dlogits = cache.probs;
    for (Eigen::Index t = 0; t < t_steps; ++t) {
      dlogits(t, cache.labels[static_cast<std::size_t>(t)]) -= 1.0;
    }
    dlogits /= static_cast<double>(t_steps);

    Mat dc_enc = Mat::Zero(cache.c_enc.rows(), cfg_.d_model);
    decoder_backward(dlogits, cache.dec, grads, dc_enc);

    std::vector<Mat> dslot(cache.slots.size());
    for (std::size_t s = 0; s < cache.slots.size(); ++s) {
      dslot[s] = dc_enc.middleRows(cache.slot_offsets[s], cache.slot_outputs[s].rows());
    }
    for (std::size_t k = 0; k < cache.pair_slot_indices.size(); ++k) {
      std::size_t s = cache.pair_slot_indices[k];
      double dz = cache.rel[k].p - static_cast<double>(bundle.pair_labels[k]);
      Mat extra = relevance_backward(dz, cache.rel[k], cache.slot_outputs[s].rows(), grads);
      if (extra.rows() > 0) dslot[s] += extra;
    }
    for (std::size_t s = 0; s < cache.slots.size(); ++s) {
      encoder_backward(dslot[s], cache.slot_caches[s], grads);
    }
  }

  ModelConfig cfg_;
  Params params_;
  std::size_t embed_ = 0;
  std::vector<EncLayerH> enc_layers_;
  LnH enc_lnf_{};
  std::vector<DecLayerH> dec_layers_;
  LnH dec_lnf_{};
  std::size_t out_w_ = 0, out_b_ = 0;
  std::size_t rel_w1_ = 0, rel_b1_ = 0, rel_w2_ = 0, rel_b2_ = 0;
};

}  // namespace fidfix
