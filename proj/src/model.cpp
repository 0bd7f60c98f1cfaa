#include "prefixrec/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace prefixrec {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void Gradients::axpy(double a, const Gradients& other) {
  auto add = [a](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += a * src.data[i];
  };
  add(item_embed, other.item_embed);
  for (std::size_t t = 0; t < token_embed.size(); ++t) add(token_embed[t], other.token_embed[t]);
  for (std::size_t t = 0; t < step_proj.size(); ++t) add(step_proj[t], other.step_proj[t]);
  for (std::size_t t = 0; t < output_proj.size(); ++t) add(output_proj[t], other.output_proj[t]);
  for (std::size_t t = 0; t < bias.size(); ++t) add(bias[t], other.bias[t]);
}

Gradients make_gradients(const ModelParams& params) {
  Gradients g;
  g.item_embed = Tensor(params.item_embed.name, params.item_embed.shape);
  auto like = [](const std::vector<Tensor>& src) {
    std::vector<Tensor> out;
    out.reserve(src.size());
    for (const auto& t : src) out.emplace_back(t.name, t.shape);
    return out;
  };
  g.token_embed = like(params.token_embed);
  g.step_proj = like(params.step_proj);
  g.output_proj = like(params.output_proj);
  g.bias = like(params.bias);
  return g;
}

ModelParams init_params(const TokenizedCatalog& catalog, std::size_t d, std::uint64_t seed) {
  if (d < 1) throw ConfigError("init_params: hidden size must be >= 1");
  ModelParams p;
  p.d = d;
  p.num_items = catalog.num_items;
  p.vocab = catalog.level_vocab_sizes;
  const std::size_t T = p.vocab.size();

  p.item_embed = Tensor("item_embed", {p.num_items, d});
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t v = p.vocab[t];
    p.token_embed.emplace_back("token_embed." + std::to_string(t), std::vector<std::size_t>{v, d});
    p.step_proj.emplace_back("step_proj." + std::to_string(t), std::vector<std::size_t>{d, d});
    p.output_proj.emplace_back("output_proj." + std::to_string(t), std::vector<std::size_t>{d, v});
    p.bias.emplace_back("bias." + std::to_string(t), std::vector<std::size_t>{v});
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  p.for_each_tensor([&](Tensor& t) {
    for (double& x : t.data) x = uniform_in(rng, -scale, scale);
  });
  return p;
}

ForwardTrace forward(const ModelParams& params, std::span<const std::uint32_t> history,
                     std::span<const std::uint32_t> codes) {
  if (history.empty()) throw DataError("forward: empty history");
  const std::size_t T = params.seq_len();
  if (codes.size() != T) {
    throw DataError("forward: expected " + std::to_string(T) + " codes, got " +
                    std::to_string(codes.size()));
  }
  for (std::uint32_t it : history) {
    if (it >= params.num_items) throw DataError("forward: history item out of range");
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (codes[t] >= params.vocab[t]) {
      throw DataError("forward: code " + std::to_string(codes[t]) + " out of range at level " +
                      std::to_string(t));
    }
  }
  const std::size_t d = params.d;

  ForwardTrace tr;
  tr.history.assign(history.begin(), history.end());
  tr.codes.assign(codes.begin(), codes.end());
  tr.pooled.assign(d, 0.0);
  for (std::uint32_t it : history) {
    const double* row = params.item_embed.row(it);
    for (std::size_t j = 0; j < d; ++j) tr.pooled[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(history.size());
  for (std::size_t j = 0; j < d; ++j) tr.pooled[j] *= inv;

  tr.pre.resize(T);
  tr.hidden.resize(T);
  tr.logits.resize(T);
  tr.log_probs.resize(T);

  std::vector<double> prefix_sum = tr.pooled;  // pooled + sum of prefix token embeddings
  for (std::size_t t = 0; t < T; ++t) {
    tr.pre[t] = prefix_sum;
    auto& hidden = tr.hidden[t];
    hidden.assign(d, 0.0);
    const Tensor& proj = params.step_proj[t];
    for (std::size_t r = 0; r < d; ++r) {
      const double* prow = proj.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += prow[c] * tr.pre[t][c];
      hidden[r] = std::tanh(acc);
    }
    const std::size_t v = params.vocab[t];
    auto& logits = tr.logits[t];
    logits.assign(params.bias[t].data.begin(), params.bias[t].data.end());
    const Tensor& out = params.output_proj[t];
    for (std::size_t k = 0; k < d; ++k) {
      const double h = hidden[k];
      const double* wrow = out.row(k);
      for (std::size_t j = 0; j < v; ++j) logits[j] += h * wrow[j];
    }
    tr.log_probs[t] = log_softmax(logits);

    if (t + 1 < T) {
      const double* emb = params.token_embed[t].row(codes[t]);
      for (std::size_t j = 0; j < d; ++j) prefix_sum[j] += emb[j];
    }
  }
  return tr;
}

void backward(const ModelParams& params, const ForwardTrace& trace, const LogitGrads& dlogits,
              Gradients& grads) {
  const std::size_t T = params.seq_len();
  if (dlogits.size() != T) throw std::logic_error("backward: dlogits step count mismatch");
  const std::size_t d = params.d;

  std::vector<double> dpooled(d, 0.0);
  std::vector<double> dhidden(d), dact(d), dpre(d);

  for (std::size_t t = 0; t < T; ++t) {
    const auto& dl = dlogits[t];
    if (dl.empty()) continue;
    const std::size_t v = params.vocab[t];
    if (dl.size() != v) throw std::logic_error("backward: dlogits width mismatch at step");

    double* dbias = grads.bias[t].data.data();
    for (std::size_t j = 0; j < v; ++j) dbias[j] += dl[j];

    const Tensor& out = params.output_proj[t];
    Tensor& dout = grads.output_proj[t];
    for (std::size_t k = 0; k < d; ++k) {
      const double h = trace.hidden[t][k];
      const double* wrow = out.row(k);
      double* dwrow = dout.row(k);
      double acc = 0.0;
      for (std::size_t j = 0; j < v; ++j) {
        dwrow[j] += h * dl[j];
        acc += wrow[j] * dl[j];
      }
      dhidden[k] = acc;
    }
    for (std::size_t k = 0; k < d; ++k) {
      const double h = trace.hidden[t][k];
      dact[k] = dhidden[k] * (1.0 - h * h);
    }
    const Tensor& proj = params.step_proj[t];
    Tensor& dproj = grads.step_proj[t];
    std::fill(dpre.begin(), dpre.end(), 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      const double a = dact[r];
      const double* prow = proj.row(r);
      double* dprow = dproj.row(r);
      for (std::size_t c = 0; c < d; ++c) {
        dprow[c] += a * trace.pre[t][c];
        dpre[c] += prow[c] * a;
      }
    }
    for (std::size_t c = 0; c < d; ++c) dpooled[c] += dpre[c];
    for (std::size_t j = 0; j < t; ++j) {
      double* drow = grads.token_embed[j].row(trace.codes[j]);
      for (std::size_t c = 0; c < d; ++c) drow[c] += dpre[c];
    }
  }

  const double inv = 1.0 / static_cast<double>(trace.history.size());
  for (std::uint32_t it : trace.history) {
    double* drow = grads.item_embed.row(it);
    for (std::size_t c = 0; c < d; ++c) drow[c] += dpooled[c] * inv;
  }
}

std::vector<double> pool_history(const ModelParams& params,
                                 std::span<const std::uint32_t> history) {
  if (history.empty()) throw DataError("pool_history: empty history");
  std::vector<double> pooled(params.d, 0.0);
  for (std::uint32_t it : history) {
    if (it >= params.num_items) throw DataError("pool_history: history item out of range");
    const double* row = params.item_embed.row(it);
    for (std::size_t j = 0; j < params.d; ++j) pooled[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(history.size());
  for (double& x : pooled) x *= inv;
  return pooled;
}

std::vector<double> step_logits(const ModelParams& params, std::span<const double> pooled,
                                std::span<const std::uint32_t> prefix, std::size_t level) {
  if (level >= params.seq_len()) throw std::logic_error("step_logits: level out of range");
  if (prefix.size() < level) throw std::logic_error("step_logits: prefix shorter than level");
  const std::size_t d = params.d;

  std::vector<double> pre(pooled.begin(), pooled.end());
  for (std::size_t j = 0; j < level; ++j) {
    const double* emb = params.token_embed[j].row(prefix[j]);
    for (std::size_t c = 0; c < d; ++c) pre[c] += emb[c];
  }
  std::vector<double> hidden(d);
  const Tensor& proj = params.step_proj[level];
  for (std::size_t r = 0; r < d; ++r) {
    const double* prow = proj.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += prow[c] * pre[c];
    hidden[r] = std::tanh(acc);
  }
  const std::size_t v = params.vocab[level];
  std::vector<double> logits(params.bias[level].data.begin(), params.bias[level].data.end());
  const Tensor& out = params.output_proj[level];
  for (std::size_t k = 0; k < d; ++k) {
    const double h = hidden[k];
    const double* wrow = out.row(k);
    for (std::size_t j = 0; j < v; ++j) logits[j] += h * wrow[j];
  }
  return logits;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

namespace {

constexpr char kMagic[8] = {'P', 'F', 'X', 'R', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
  out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t dim : t.shape) write_pod<std::uint64_t>(out, dim);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in) {
  const auto name_len = read_pod<std::uint32_t>(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  const auto ndim = read_pod<std::uint32_t>(in);
  std::vector<std::size_t> shape;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in)));
  }
  Tensor t(name, shape);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint: truncated tensor payload for '" + name + "'");
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t config_digest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TrainingError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, config_digest);

  std::uint32_t count = 0;
  params.for_each_tensor([&](const Tensor&) { ++count; });
  write_pod(out, count);
  params.for_each_tensor([&](const Tensor& t) { write_tensor(out, t); });
  out.flush();
  if (!out) throw TrainingError("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path, std::uint64_t* config_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic bytes in " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto digest = read_pod<std::uint64_t>(in);
  if (config_digest) *config_digest = digest;

  const auto count = read_pod<std::uint32_t>(in);
  std::vector<Tensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) tensors.push_back(read_tensor(in));

  ModelParams p;
  auto take = [&](const std::string& name) -> Tensor {
    for (auto& t : tensors) {
      if (t.name == name) return std::move(t);
    }
    throw DataError("checkpoint: missing tensor '" + name + "'");
  };
  p.item_embed = take("item_embed");
  p.num_items = p.item_embed.rows();
  p.d = p.item_embed.cols();
  for (std::size_t t = 0;; ++t) {
    const std::string suffix = "." + std::to_string(t);
    bool found = false;
    for (const auto& tn : tensors) {
      if (tn.name == "bias" + suffix) found = true;
    }
    if (!found) break;
    p.token_embed.push_back(take("token_embed" + suffix));
    p.step_proj.push_back(take("step_proj" + suffix));
    p.output_proj.push_back(take("output_proj" + suffix));
    p.bias.push_back(take("bias" + suffix));
    p.vocab.push_back(static_cast<std::uint32_t>(p.bias.back().rows()));
  }
  if (p.vocab.empty()) throw DataError("checkpoint: no per-level tensors in " + path);
  return p;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  if (a.d != b.d || a.num_items != b.num_items || a.vocab != b.vocab) return false;
  bool equal = true;
  std::vector<const Tensor*> ta, tb;
  a.for_each_tensor([&](const Tensor& t) { ta.push_back(&t); });
  b.for_each_tensor([&](const Tensor& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i]->shape != tb[i]->shape) return false;
    if (std::memcmp(ta[i]->data.data(), tb[i]->data.data(),
                    ta[i]->data.size() * sizeof(double)) != 0) {
      equal = false;
    }
  }
  return equal;
}

}  // namespace prefixrec
