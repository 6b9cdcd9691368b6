#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "fidfix/common.hpp"
#include "fidfix/model.hpp"

namespace fidfix {

// Binary checkpoint, version 1, little-endian:
//   magic "FFCP", u32 version,
//   u32 d_model, n_heads, n_enc_layers, n_dec_layers, ffn_dim, vocab_size,
//       segment_len, max_segments,
//   u64 seed, f64 learning_rate, f64 weight_decay, u32 batch_size, u32 epochs,
//   u64 config_hash,
//   u32 tensor_count, then per tensor:
//     u32 name_len, name bytes, u64 rows, u64 cols, rows*cols f64
//     (column-major).
inline constexpr char kCheckpointMagic[4] = {'F', 'F', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckptdetail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw InputError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace ckptdetail

inline void save_checkpoint(const FidModel& model, std::uint64_t config_hash,
                            const std::string& path) {
  using namespace ckptdetail;
  const ModelConfig& c = model.config();
  const Params& p = model.params();
  std::string out;
  out.append(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (int v : {c.d_model, c.n_heads, c.n_enc_layers, c.n_dec_layers, c.ffn_dim, c.vocab_size,
                c.segment_len, c.max_segments}) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  put<std::uint64_t>(out, c.seed);
  put<double>(out, c.learning_rate);
  put<double>(out, c.weight_decay);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.batch_size));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.epochs));
  put<std::uint64_t>(out, config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.count()));
  for (std::size_t h = 0; h < p.count(); ++h) {
    const std::string& name = p.name(h);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p[h].rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p[h].cols()));
    out.append(reinterpret_cast<const char*>(p[h].data()),
               static_cast<std::size_t>(p[h].size()) * sizeof(double));
  }
  write_file(path, out);
}

struct LoadedCheckpoint {
  FidModel model;
  std::uint64_t config_hash = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  using namespace ckptdetail;
  std::string in = read_file(path);
  std::size_t at = 0;
  if (in.size() < 8 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) {
    throw InputError("not a checkpoint file: " + path);
  }
  at = 4;
  std::uint32_t version = take<std::uint32_t>(in, at);
  if (version != kCheckpointVersion) {
    throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.d_model = static_cast<int>(take<std::uint32_t>(in, at));
  c.n_heads = static_cast<int>(take<std::uint32_t>(in, at));
  c.n_enc_layers = static_cast<int>(take<std::uint32_t>(in, at));
  c.n_dec_layers = static_cast<int>(take<std::uint32_t>(in, at));
  c.ffn_dim = static_cast<int>(take<std::uint32_t>(in, at));
  c.vocab_size = static_cast<int>(take<std::uint32_t>(in, at));
  c.segment_len = static_cast<int>(take<std::uint32_t>(in, at));
  c.max_segments = static_cast<int>(take<std::uint32_t>(in, at));
  c.seed = take<std::uint64_t>(in, at);
  c.learning_rate = take<double>(in, at);
  c.weight_decay = take<double>(in, at);
  c.batch_size = static_cast<int>(take<std::uint32_t>(in, at));
  c.epochs = static_cast<int>(take<std::uint32_t>(in, at));
  std::uint64_t hash = take<std::uint64_t>(in, at);
  std::uint32_t n_tensors = take<std::uint32_t>(in, at);

  LoadedCheckpoint out{FidModel(c), hash};
  Params& p = out.model.params();
  if (n_tensors != p.count()) {
    throw InputError(path + ": tensor count mismatch for the config header");
  }
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::uint32_t name_len = take<std::uint32_t>(in, at);
    if (at + name_len > in.size()) throw InputError("checkpoint truncated");
    std::string name(in.data() + at, name_len);
    at += name_len;
    std::uint64_t rows = take<std::uint64_t>(in, at);
    std::uint64_t cols = take<std::uint64_t>(in, at);
    std::size_t h = p.find(name);
    if (p[h].rows() != static_cast<Eigen::Index>(rows) ||
        p[h].cols() != static_cast<Eigen::Index>(cols)) {
      throw InputError(path + ": shape mismatch for tensor " + name);
    }
    std::size_t bytes = static_cast<std::size_t>(rows) * cols * sizeof(double);
    if (at + bytes > in.size()) throw InputError("checkpoint truncated");
    std::memcpy(p[h].data(), in.data() + at, bytes);
    at += bytes;
  }
  if (!p.all_finite()) throw InputError(path + ": checkpoint holds non-finite values");
  return out;
}

}  // namespace fidfix
