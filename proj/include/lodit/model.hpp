// Copyright 2026 The lodit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lodit/config.hpp"
#include "lodit/vocab.hpp"

namespace lodit {

/// Numerically stable softmax (max subtraction).
template <typename Vec>
std::vector<double> softmax_probs(const Vec& logits) {
  std::vector<double> p(logits.size());
  if (p.empty()) return p;
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) m = std::max(m, static_cast<double>(logits[i]));
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(static_cast<double>(logits[i]) - m));
  for (auto& v : p) v /= z;
  return p;
}

/// log softmax of one entry: l_i - logsumexp(l).
template <typename Vec>
double log_softmax_at(const Vec& logits, std::size_t i) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(logits.size()); ++j)
    m = std::max(m, static_cast<double>(logits[j]));
  double z = 0.0;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(logits.size()); ++j)
    z += std::exp(static_cast<double>(logits[j]) - m);
  return static_cast<double>(logits[i]) - m - std::log(z);
}

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t window = 512;
  std::size_t vocab_size = 0;
  std::size_t ffn_mult = 4;
  double init_std = 0.0;  // <= 0 picks 1/sqrt(width)
  double embed_std = 1.0;
  bool tie_embeddings = true;  // readout reuses the embedding matrix, scaled by 1/sqrt(width)
  bool rotary = true;          // rotary query/key positions; false adds sinusoids to the input
  bool smeared_keys = true;    // each key mixes in its predecessor with a learned per-head weight
  std::size_t conv_taps = 3;   // causal per-channel mixing of the previous tokens into the attention input

  std::size_t ffn() const { return ffn_mult * width; }
  std::size_t head_dim() const { return width / heads; }
  double weight_std() const { return init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(width)); }

  void validate() const {
    if (layers < 1 || width < 1 || heads < 1 || window < 1 || vocab_size < 1 || ffn_mult < 1)
      throw Error("model config: all dimensions must be >= 1");
    if (width % heads) throw Error("model config: width must be divisible by heads");
    if (rotary && head_dim() % 2) throw Error("model config: rotary positions need an even head width");
  }

  static ModelConfig from(const KeyValueConfig& kv) {
    ModelConfig c;
    c.layers = kv.get<std::size_t>("layers", c.layers);
    c.width = kv.get<std::size_t>("width", c.width);
    c.heads = kv.get<std::size_t>("heads", c.heads);
    c.window = kv.get<std::size_t>("window", c.window);
    c.ffn_mult = kv.get<std::size_t>("ffn_mult", c.ffn_mult);
    c.init_std = kv.get<double>("init_std", c.init_std);
    c.embed_std = kv.get<double>("embed_std", c.embed_std);
    c.tie_embeddings = kv.get<bool>("tie_embeddings", c.tie_embeddings);
    c.rotary = kv.get<bool>("rotary", c.rotary);
    c.smeared_keys = kv.get<bool>("smeared_keys", c.smeared_keys);
    c.conv_taps = kv.get<std::size_t>("conv_taps", c.conv_taps);
    return c;
  }
};

/// Offsets of every parameter tensor inside the flat parameter vector.
struct ParamLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    std::size_t smear = 0;  // one logit per head, present with smeared keys
    std::size_t conv = 0;   // conv_taps x width
  };
  std::vector<Layer> layer;
  std::size_t embed = 0, lnf_g = 0, lnf_b = 0, wout = 0, bout = 0;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig& c) {
    const std::size_t d = c.width, f = c.ffn(), v = c.vocab_size;
    auto take = [this](std::size_t n) {
      auto at = total;
      total += n;
      return at;
    };
    embed = take(v * d);
    for (std::size_t l = 0; l < c.layers; ++l) {
      Layer L{};
      L.ln1_g = take(d);
      L.ln1_b = take(d);
      L.wq = take(d * d);
      L.wk = take(d * d);
      L.wv = take(d * d);
      L.wo = take(d * d);
      L.bo = take(d);
      L.ln2_g = take(d);
      L.ln2_b = take(d);
      L.w1 = take(d * f);
      L.b1 = take(f);
      L.w2 = take(f * d);
      L.b2 = take(d);
      if (c.smeared_keys) L.smear = take(c.heads);
      if (c.conv_taps) L.conv = take(c.conv_taps * d);
      layer.push_back(L);
    }
    lnf_g = take(d);
    lnf_b = take(d);
    if (!c.tie_embeddings) wout = take(d * v);
    bout = take(v);
  }
};

struct SequenceTooLong : Error {
  using Error::Error;
};

/// Pre-LayerNorm decoder-only transformer with fixed sinusoidal positions and
/// hand-written backpropagation. Parameters live in one flat vector so that
/// optimizers, checkpoints and finite differences treat them uniformly.
template <typename Scalar>
class Transformer {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using MatMap = Eigen::Map<Mat>;
  using CMatMap = Eigen::Map<const Mat>;
  using RowMap = Eigen::Map<Row>;
  using CRowMap = Eigen::Map<const Row>;

  struct LayerCache {
    Mat x_in, xhat1, h1, h1c, q, k, k_raw, v, att, x_mid, xhat2, h2, pre, act;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstd1, rstd2;
    std::vector<Mat> probs;
  };

  struct Cache {
    std::vector<TokenId> tokens;
    std::vector<LayerCache> layers;
    Mat x_final, xhatf, hf;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstdf;
  };

  Transformer() = default;

  Transformer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), layout_(cfg) {
    cfg_.validate();
    params_.assign(layout_.total, Scalar(0));
    init(seed);
    build_positions();
  }

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<Scalar> params() { return params_; }
  std::span<const Scalar> params() const { return params_; }

  /// Sum of parameters weighted by position; cheap fingerprint for determinism checks.
  double checksum() const {
    double s = 0.0;
    for (std::size_t i = 0; i < params_.size(); ++i)
      s += static_cast<double>(params_[i]) * static_cast<double>((i % 97) + 1);
    return s;
  }

  bool finite() const {
    for (auto p : params_)
      if (!std::isfinite(static_cast<double>(p))) return false;
    return true;
  }

  /// Logits for every position (rows) over the vocabulary (columns). Row t
  /// depends on tokens[0..t] only.
  Mat forward(const Tokens& tokens, Cache* cache = nullptr) const {
    const auto T = static_cast<Eigen::Index>(tokens.size());
    const auto d = static_cast<Eigen::Index>(cfg_.width);
    if (tokens.empty()) throw Error("forward: empty sequence");
    if (tokens.size() > cfg_.window)
      throw SequenceTooLong("sequence of " + std::to_string(tokens.size()) + " tokens exceeds window " +
                            std::to_string(cfg_.window));
    const Scalar* P = params_.data();
    CMatMap emb(P + layout_.embed, cfg_.vocab_size, d);

    Mat x(T, d);
    for (Eigen::Index t = 0; t < T; ++t) {
      auto id = tokens[t];
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) throw Error("forward: token out of range");
      x.row(t) = emb.row(id);
      if (!cfg_.rotary) x.row(t) += positions_.row(t);
    }

    Cache local;
    Cache& c = cache ? *cache : local;
    const bool keep = cache != nullptr;
    c.tokens = tokens;
    c.layers.resize(cfg_.layers);

    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& L = layout_.layer[l];
      auto& lc = c.layers[l];
      lc.x_in = x;
      layer_norm(x, row(P + L.ln1_g), row(P + L.ln1_b), lc.xhat1, lc.rstd1, lc.h1);
      lc.h1c = lc.h1;
      for (std::size_t i = 1; i <= cfg_.conv_taps && static_cast<Eigen::Index>(i) < T; ++i) {
        const auto s = static_cast<Eigen::Index>(i);
        lc.h1c.bottomRows(T - s) += (lc.h1.topRows(T - s).array().rowwise() * row(P + L.conv + (i - 1) * cfg_.width).array()).matrix();
      }
      lc.q = lc.h1c * mat(P + L.wq, d, d);
      lc.k = lc.h1c * mat(P + L.wk, d, d);
      if (cfg_.rotary) {
        rotate(lc.q, false);
        rotate(lc.k, false);
      }
      if (cfg_.smeared_keys) smear(lc, P + L.smear);
      lc.v = lc.h1c * mat(P + L.wv, d, d);
      attention(lc);
      x = x + lc.att * mat(P + L.wo, d, d);
      x.rowwise() += row(P + L.bo);
      lc.x_mid = x;
      layer_norm(x, row(P + L.ln2_g), row(P + L.ln2_b), lc.xhat2, lc.rstd2, lc.h2);
      const auto f = static_cast<Eigen::Index>(cfg_.ffn());
      lc.pre = lc.h2 * mat(P + L.w1, d, f);
      lc.pre.rowwise() += vec(P + L.b1, f);
      lc.act = lc.pre.unaryExpr([](Scalar z) { return gelu(z); });
      x = x + lc.act * mat(P + L.w2, f, d);
      x.rowwise() += row(P + L.b2);
      if (!keep) lc = LayerCache{};
    }
    c.x_final = x;
    layer_norm(x, row(P + layout_.lnf_g), row(P + layout_.lnf_b), c.xhatf, c.rstdf, c.hf);
    Mat logits = cfg_.tie_embeddings ? Mat(c.hf * emb.transpose() * readout_scale())
                                     : Mat(c.hf * mat(P + layout_.wout, d, static_cast<Eigen::Index>(cfg_.vocab_size)));
    logits.rowwise() += vec(P + layout_.bout, static_cast<Eigen::Index>(cfg_.vocab_size));
    return logits;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
  void backward(const Cache& c, const Mat& dlogits, std::span<Scalar> grad) const {
    if (grad.size() != params_.size()) throw Error("backward: gradient buffer has wrong size");
    const auto d = static_cast<Eigen::Index>(cfg_.width);
    const auto f = static_cast<Eigen::Index>(cfg_.ffn());
    const auto V = static_cast<Eigen::Index>(cfg_.vocab_size);
    const Scalar* P = params_.data();
    Scalar* G = grad.data();

    vec(G + layout_.bout, V) += dlogits.colwise().sum();
    Mat dh;
    if (cfg_.tie_embeddings) {
      mat(G + layout_.embed, V, d).noalias() += readout_scale() * (dlogits.transpose() * c.hf);
      dh = readout_scale() * (dlogits * mat(P + layout_.embed, V, d));
    } else {
      mat(G + layout_.wout, d, V).noalias() += c.hf.transpose() * dlogits;
      dh = dlogits * mat(P + layout_.wout, d, V).transpose();
    }
    Mat dx = layer_norm_backward(dh, c.xhatf, c.rstdf, row(P + layout_.lnf_g), row(G + layout_.lnf_g),
                                 row(G + layout_.lnf_b));

    for (std::size_t li = cfg_.layers; li-- > 0;) {
      const auto& L = layout_.layer[li];
      const auto& lc = c.layers[li];
      // feed-forward
      row(G + L.b2) += dx.colwise().sum();
      mat(G + L.w2, f, d).noalias() += lc.act.transpose() * dx;
      Mat dact = dx * mat(P + L.w2, f, d).transpose();
      Mat dpre = dact.cwiseProduct(lc.pre.unaryExpr([](Scalar z) { return gelu_grad(z); }));
      vec(G + L.b1, f) += dpre.colwise().sum();
      mat(G + L.w1, d, f).noalias() += lc.h2.transpose() * dpre;
      Mat dh2 = dpre * mat(P + L.w1, d, f).transpose();
      dx += layer_norm_backward(dh2, lc.xhat2, lc.rstd2, row(P + L.ln2_g), row(G + L.ln2_g), row(G + L.ln2_b));
      // attention
      row(G + L.bo) += dx.colwise().sum();
      mat(G + L.wo, d, d).noalias() += lc.att.transpose() * dx;
      Mat datt = dx * mat(P + L.wo, d, d).transpose();
      Mat dq, dk, dv;
      attention_backward(lc, datt, dq, dk, dv);
      if (cfg_.smeared_keys) smear_backward(lc, P + L.smear, G + L.smear, dk);
      if (cfg_.rotary) {
        rotate(dq, true);
        rotate(dk, true);
      }
      mat(G + L.wq, d, d).noalias() += lc.h1c.transpose() * dq;
      mat(G + L.wk, d, d).noalias() += lc.h1c.transpose() * dk;
      mat(G + L.wv, d, d).noalias() += lc.h1c.transpose() * dv;
      const Mat dh1c = dq * mat(P + L.wq, d, d).transpose() + dk * mat(P + L.wk, d, d).transpose() +
                       dv * mat(P + L.wv, d, d).transpose();
      Mat dh1 = dh1c;
      const auto T = dh1c.rows();
      for (std::size_t i = 1; i <= cfg_.conv_taps && static_cast<Eigen::Index>(i) < T; ++i) {
        const auto s = static_cast<Eigen::Index>(i);
        const auto w = row(P + L.conv + (i - 1) * cfg_.width);
        row(G + L.conv + (i - 1) * cfg_.width) += dh1c.bottomRows(T - s).cwiseProduct(lc.h1.topRows(T - s)).colwise().sum();
        dh1.topRows(T - s) += (dh1c.bottomRows(T - s).array().rowwise() * w.array()).matrix();
      }
      dx += layer_norm_backward(dh1, lc.xhat1, lc.rstd1, row(P + L.ln1_g), row(G + L.ln1_g), row(G + L.ln1_b));
    }
    MatMap gemb(G + layout_.embed, static_cast<Eigen::Index>(cfg_.vocab_size), d);
    for (std::size_t t = 0; t < c.tokens.size(); ++t) gemb.row(c.tokens[t]) += dx.row(static_cast<Eigen::Index>(t));
  }

  // --- checkpoint -------------------------------------------------------------

  /// One JSON header line followed by the raw little-endian parameter payload.
  void save(const std::string& path, std::uint64_t vocab_hash) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    nlohmann::json h = {{"format", "lodit-checkpoint"},
                        {"version", 1},
                        {"layers", cfg_.layers},
                        {"width", cfg_.width},
                        {"heads", cfg_.heads},
                        {"window", cfg_.window},
                        {"vocab_size", cfg_.vocab_size},
                        {"ffn_mult", cfg_.ffn_mult},
                        {"tie_embeddings", cfg_.tie_embeddings},
                        {"rotary", cfg_.rotary},
                        {"smeared_keys", cfg_.smeared_keys},
                        {"conv_taps", cfg_.conv_taps},
                        {"vocab_hash", vocab_hash},
                        {"scalar_bytes", sizeof(Scalar)},
                        {"num_params", params_.size()}};
    out << h.dump() << '\n';
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(params_.size() * sizeof(Scalar)));
  }

  /// Loads a checkpoint; `vocab_hash` must match the header when nonzero.
  static Transformer load(const std::string& path, std::uint64_t vocab_hash = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    std::string line;
    std::getline(in, line);
    nlohmann::json h;
    try {
      h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error("checkpoint '" + path + "' has a malformed header");
    }
    if (h.value("format", "") != "lodit-checkpoint") throw Error("'" + path + "' is not a checkpoint");
    if (vocab_hash && h.at("vocab_hash").get<std::uint64_t>() != vocab_hash)
      throw Error("checkpoint '" + path + "' was trained with a different vocabulary");
    ModelConfig cfg;
    cfg.layers = h.at("layers");
    cfg.width = h.at("width");
    cfg.heads = h.at("heads");
    cfg.window = h.at("window");
    cfg.vocab_size = h.at("vocab_size");
    cfg.ffn_mult = h.at("ffn_mult");
    cfg.tie_embeddings = h.value("tie_embeddings", false);
    cfg.rotary = h.value("rotary", false);
    cfg.smeared_keys = h.value("smeared_keys", false);
    cfg.conv_taps = h.value("conv_taps", std::size_t{0});
    Transformer m(cfg, 0);
    const std::size_t n = h.at("num_params");
    const std::size_t bytes = h.at("scalar_bytes");
    if (n != m.params_.size()) throw Error("checkpoint parameter count does not match its dimensions");
    auto read_as = [&](auto tag) {
      using T = decltype(tag);
      std::vector<T> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(T)));
      if (!in) throw Error("checkpoint '" + path + "' is truncated");
      for (std::size_t i = 0; i < n; ++i) m.params_[i] = static_cast<Scalar>(buf[i]);
    };
    if (bytes == sizeof(float))
      read_as(float{});
    else if (bytes == sizeof(double))
      read_as(double{});
    else
      throw Error("checkpoint has unsupported scalar width");
    return m;
  }

  /// Same weights in another scalar type.
  template <typename Other>
  Transformer<Other> cast() const {
    Transformer<Other> out(cfg_, 0);
    auto dst = out.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
    return out;
  }

 private:
  static MatMap mat(Scalar* p, Eigen::Index r, Eigen::Index c) { return MatMap(p, r, c); }
  static CMatMap mat(const Scalar* p, Eigen::Index r, Eigen::Index c) { return CMatMap(p, r, c); }
  RowMap row(Scalar* p) const { return RowMap(p, static_cast<Eigen::Index>(cfg_.width)); }
  CRowMap row(const Scalar* p) const { return CRowMap(p, static_cast<Eigen::Index>(cfg_.width)); }
  static RowMap vec(Scalar* p, Eigen::Index n) { return RowMap(p, n); }
  static CRowMap vec(const Scalar* p, Eigen::Index n) { return CRowMap(p, n); }

  static constexpr Scalar kGeluC = static_cast<Scalar>(0.7978845608028654);  // sqrt(2/pi)
  static constexpr Scalar kGeluA = static_cast<Scalar>(0.044715);
  static constexpr Scalar kLnEps = static_cast<Scalar>(1e-5);

  static Scalar gelu(Scalar z) {
    return Scalar(0.5) * z * (Scalar(1) + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
  }
  static Scalar gelu_grad(Scalar z) {
    const Scalar t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
    return Scalar(0.5) * (Scalar(1) + t) +
           Scalar(0.5) * z * (Scalar(1) - t * t) * kGeluC * (Scalar(1) + Scalar(3) * kGeluA * z * z);
  }

  template <typename G, typename B>
  static void layer_norm(const Mat& x, const G& gain, const B& bias, Mat& xhat,
                         Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rstd, Mat& y) {
    const auto T = x.rows();
    const auto d = static_cast<Scalar>(x.cols());
    xhat.resize(T, x.cols());
    rstd.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const Scalar mean = x.row(t).sum() / d;
      const Scalar var = (x.row(t).array() - mean).square().sum() / d;
      rstd(t) = Scalar(1) / std::sqrt(var + kLnEps);
      xhat.row(t) = (x.row(t).array() - mean) * rstd(t);
    }
    y = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  }

  template <typename G, typename DG, typename DB>
  static Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rstd,
                                 const G& gain, DG&& dgain, DB&& dbias) {
    dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
    dbias += dy.colwise().sum();
    Mat dxhat = (dy.array().rowwise() * gain.array()).matrix();
    const auto d = static_cast<Scalar>(dy.cols());
    Mat dx(dy.rows(), dy.cols());
    for (Eigen::Index t = 0; t < dy.rows(); ++t) {
      const Scalar m1 = dxhat.row(t).sum() / d;
      const Scalar m2 = dxhat.row(t).dot(xhat.row(t)) / d;
      dx.row(t) = rstd(t) * (dxhat.row(t).array() - m1 - xhat.row(t).array() * m2).matrix();
    }
    return dx;
  }

  void attention(LayerCache& lc) const {
    const auto T = lc.q.rows();
    const auto hd = static_cast<Eigen::Index>(cfg_.head_dim());
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    lc.att.resize(T, lc.q.cols());
    lc.probs.resize(cfg_.heads);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * hd;
      Mat s = (lc.q.middleCols(off, hd) * lc.k.middleCols(off, hd).transpose()) * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const Scalar m = s.row(i).head(i + 1).maxCoeff();
        Scalar z = 0;
        for (Eigen::Index j = 0; j <= i; ++j) z += (s(i, j) = std::exp(s(i, j) - m));
        s.row(i).head(i + 1) /= z;
        s.row(i).tail(T - i - 1).setZero();
      }
      lc.att.middleCols(off, hd) = s * lc.v.middleCols(off, hd);
      lc.probs[h] = std::move(s);
    }
  }

  void attention_backward(const LayerCache& lc, const Mat& datt, Mat& dq, Mat& dk, Mat& dv) const {
    const auto T = lc.q.rows();
    const auto hd = static_cast<Eigen::Index>(cfg_.head_dim());
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    dq.setZero(T, lc.q.cols());
    dk.setZero(T, lc.q.cols());
    dv.setZero(T, lc.q.cols());
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * hd;
      const Mat& p = lc.probs[h];
      const auto dout = datt.middleCols(off, hd);
      dv.middleCols(off, hd).noalias() = p.transpose() * dout;
      Mat dp = dout * lc.v.middleCols(off, hd).transpose();
      Mat ds = p.cwiseProduct(dp);
      for (Eigen::Index i = 0; i < T; ++i) {
        const Scalar r = ds.row(i).sum();
        ds.row(i) -= r * p.row(i);
      }
      ds *= scale;
      dq.middleCols(off, hd).noalias() = ds * lc.k.middleCols(off, hd);
      dk.middleCols(off, hd).noalias() = ds.transpose() * lc.q.middleCols(off, hd);
    }
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto d = cfg_.width, f = cfg_.ffn(), v = cfg_.vocab_size;
    auto fill = [&](std::size_t at, std::size_t n, double sd) {
      std::normal_distribution<double> nd(0.0, sd);
      for (std::size_t i = 0; i < n; ++i) params_[at + i] = static_cast<Scalar>(nd(rng));
    };
    auto ones = [&](std::size_t at, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) params_[at + i] = Scalar(1);
    };
    const double sd = cfg_.weight_std();
    const double resid = sd / std::sqrt(2.0 * static_cast<double>(cfg_.layers));
    fill(layout_.embed, v * d, cfg_.embed_std);
    for (const auto& L : layout_.layer) {
      ones(L.ln1_g, d);
      ones(L.ln2_g, d);
      fill(L.wq, d * d, sd);
      fill(L.wk, d * d, sd);
      fill(L.wv, d * d, sd);
      fill(L.wo, d * d, resid);
      fill(L.w1, d * f, sd);
      fill(L.w2, f * d, resid);
    }
    ones(layout_.lnf_g, d);
    if (!cfg_.tie_embeddings) fill(layout_.wout, d * v, sd);
  }

  static Scalar sigmoid(Scalar z) { return Scalar(1) / (Scalar(1) + std::exp(-z)); }

  /// k[t] <- w k[t] + (1 - w) k[t-1] per head, w = sigmoid(logit), k[-1] = 0.
  void smear(LayerCache& lc, const Scalar* logits) const {
    const auto hd = static_cast<Eigen::Index>(cfg_.head_dim());
    lc.k_raw = lc.k;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const Scalar w = sigmoid(logits[h]);
      const auto off = static_cast<Eigen::Index>(h) * hd;
      lc.k.middleCols(off, hd) *= w;
      lc.k.middleCols(off, hd).bottomRows(lc.k.rows() - 1) += (1 - w) * lc.k_raw.middleCols(off, hd).topRows(lc.k.rows() - 1);
    }
  }

  /// Maps d(loss)/d(smeared keys) in `dk` to d(loss)/d(raw keys) and
  /// accumulates the mixing-logit gradients.
  void smear_backward(const LayerCache& lc, const Scalar* logits, Scalar* glogits, Mat& dk) const {
    const auto hd = static_cast<Eigen::Index>(cfg_.head_dim());
    const auto T = dk.rows();
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const Scalar w = sigmoid(logits[h]);
      const auto off = static_cast<Eigen::Index>(h) * hd;
      auto g = dk.middleCols(off, hd);
      const auto k = lc.k_raw.middleCols(off, hd);
      Scalar dw = g.cwiseProduct(k).sum();
      if (T > 1) dw -= g.bottomRows(T - 1).cwiseProduct(k.topRows(T - 1)).sum();
      glogits[h] += dw * w * (1 - w);
      Mat raw = w * g;
      if (T > 1) raw.topRows(T - 1) += (1 - w) * g.bottomRows(T - 1);
      g = raw;
    }
  }

  Scalar readout_scale() const { return Scalar(1) / std::sqrt(static_cast<Scalar>(cfg_.width)); }

  /// Rotates each head's (2i, 2i+1) pairs by position; `inverse` applies the
  /// transpose, which maps gradients back through the rotation.
  void rotate(Mat& m, bool inverse) const {
    const auto hd = static_cast<Eigen::Index>(cfg_.head_dim());
    const Scalar sign = inverse ? Scalar(-1) : Scalar(1);
    for (Eigen::Index t = 0; t < m.rows(); ++t)
      for (std::size_t h = 0; h < cfg_.heads; ++h)
        for (Eigen::Index i = 0; i < hd / 2; ++i) {
          const Eigen::Index a = static_cast<Eigen::Index>(h) * hd + 2 * i;
          const Scalar c = rot_cos_(t, i), sn = sign * rot_sin_(t, i);
          const Scalar x = m(t, a), y = m(t, a + 1);
          m(t, a) = x * c - y * sn;
          m(t, a + 1) = x * sn + y * c;
        }
  }

  void build_positions() {
    const auto hd = cfg_.head_dim();
    rot_cos_.resize(static_cast<Eigen::Index>(cfg_.window), static_cast<Eigen::Index>(hd / 2));
    rot_sin_.resizeLike(rot_cos_);
    for (std::size_t t = 0; t < cfg_.window; ++t)
      for (std::size_t i = 0; i < hd / 2; ++i) {
        const double a = static_cast<double>(t) * std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
        rot_cos_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = static_cast<Scalar>(std::cos(a));
        rot_sin_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = static_cast<Scalar>(std::sin(a));
      }
    const auto d = cfg_.width;
    positions_.resize(static_cast<Eigen::Index>(cfg_.window), static_cast<Eigen::Index>(d));
    for (std::size_t t = 0; t < cfg_.window; ++t)
      for (std::size_t i = 0; i < d; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        const double a = static_cast<double>(t) * freq;
        positions_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
            static_cast<Scalar>(i % 2 == 0 ? std::sin(a) : std::cos(a));
      }
  }

  ModelConfig cfg_;
  ParamLayout layout_{ModelConfig{1, 1, 1, 1, 1}};
  std::vector<Scalar> params_;
  Mat positions_, rot_cos_, rot_sin_;
};

}  // namespace lodit
