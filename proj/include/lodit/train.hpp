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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "lodit/config.hpp"
#include "lodit/corpus.hpp"
#include "lodit/losses.hpp"
#include "lodit/marking.hpp"
#include "lodit/model.hpp"
#include "lodit/vocab.hpp"

namespace lodit {

struct TrainConfig {
  double alpha = 0.25;
  double lr = 3e-4;  // 2e-5 for billion-parameter backbones
  double warmup_frac = 0.05;
  std::size_t batch_size = 16;
  std::size_t epochs = 2;
  std::uint64_t seed = 1;
  AttLoss att_loss = AttLoss::Mse;
  bool att_normalize = false;  // divide the attribution sum by answer length
  double clip_norm = 1.0;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t num_distractors = 1;
  std::size_t min_docs = 5;
  double context_lm = 0.0;  // weight of next-token loss over the prompt, added to the joint loss
  LabelSchedule labels;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("train config: alpha must lie in [0,1]");
    if (epochs < 1) throw Error("train config: epochs must be >= 1");
    if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw Error("train config: lr must be positive");
    if (!(context_lm >= 0.0)) throw Error("train config: context_lm must be >= 0");
    labels.validate();
  }

  static TrainConfig from(const KeyValueConfig& kv) {
    TrainConfig c;
    c.alpha = kv.get<double>("alpha", c.alpha);
    c.lr = kv.get<double>("lr", c.lr);
    c.warmup_frac = kv.get<double>("warmup_frac", c.warmup_frac);
    c.batch_size = kv.get<std::size_t>("batch_size", c.batch_size);
    c.epochs = kv.get<std::size_t>("epochs", c.epochs);
    c.seed = kv.get<std::uint64_t>("seed", c.seed);
    c.att_loss = parse_att_loss(kv.get<std::string>("att_loss", "mse"));
    c.att_normalize = kv.get<bool>("att_normalize", c.att_normalize);
    c.clip_norm = kv.get<double>("clip_norm", c.clip_norm);
    c.num_distractors = kv.get<std::size_t>("num_distractors", c.num_distractors);
    c.min_docs = kv.get<std::size_t>("min_docs", c.min_docs);
    c.context_lm = kv.get<double>("context_lm", c.context_lm);
    c.labels.gold_cited = kv.get<double>("label_gold", c.labels.gold_cited);
    c.labels.in_context_uncited = kv.get<double>("label_context", c.labels.in_context_uncited);
    c.labels.distractor = kv.get<double>("label_distractor", c.labels.distractor);
    c.labels.absent = kv.get<double>("label_absent", c.labels.absent);
    return c;
  }
};

/// Teacher-forced training sequence: BOS, prompt, gold answer, EOS.
struct EncodedExample {
  Tokens tokens;
  std::size_t prompt_len = 0;  // includes BOS
  std::size_t answer_len = 0;  // excludes EOS
  std::vector<std::size_t> statement_of;        // per answer token
  std::vector<StatementLabels> labels;          // per statement, per pool slot
  std::vector<TokenId> identifier_entries;      // vocabulary index per pool slot
};

/// Gold answer tokens with the statement index of every token.
inline std::pair<Tokens, std::vector<std::size_t>> encode_gold(const Example& ex, const Vocabulary& vocab) {
  Tokens toks;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < ex.gold.size(); ++i) {
    for (auto t : tokenize(ex.gold[i].text, vocab)) {
      toks.push_back(t);
      owner.push_back(i);
    }
  }
  return {toks, owner};
}

inline Tokens encode_prompt(const std::string& prompt, const Vocabulary& vocab) {
  Tokens t{vocab.bos()};
  auto body = tokenize(prompt, vocab);
  t.insert(t.end(), body.begin(), body.end());
  return t;
}

/// Marks `example`'s context followed by `distractors` under `assignment` and
/// attaches per-token attribution labels.
inline EncodedExample encode_training_example(const Example& example, const std::vector<Document>& distractors,
                                              const IdentifierAssignment& assignment, const IdentifierPool& pool,
                                              const Vocabulary& vocab, Marking marking, const PromptTemplate& tmpl,
                                              const LabelSchedule& schedule) {
  std::vector<Document> docs = example.context;
  docs.insert(docs.end(), distractors.begin(), distractors.end());
  const auto marked = mark_context(docs, assignment, pool, marking);
  EncodedExample enc;
  enc.tokens = encode_prompt(build_prompt(example.query, marked, tmpl), vocab);
  enc.prompt_len = enc.tokens.size();
  auto [answer, owner] = encode_gold(example, vocab);
  enc.answer_len = answer.size();
  enc.tokens.insert(enc.tokens.end(), answer.begin(), answer.end());
  enc.tokens.push_back(vocab.eos());
  enc.statement_of = std::move(owner);
  enc.labels = attribution_labels(example, assignment, pool, schedule, distractors.size());
  for (const auto& id : pool.tokens()) enc.identifier_entries.push_back(vocab.identifier(id));
  return enc;
}

struct LossParts {
  double ans = 0.0, att = 0.0, joint = 0.0;
  double context = 0.0;  // mean next-token loss over the prompt, when requested
};

/// Joint loss of one encoded example; when `grad` is non-empty the gradient
/// w.r.t. every parameter is accumulated into it, scaled by `weight`.
template <typename Scalar>
LossParts example_loss(const Transformer<Scalar>& model, const EncodedExample& enc, double alpha, AttLoss kind,
                       bool normalize, std::span<Scalar> grad = {}, double weight = 1.0, double context_lm = 0.0) {
  using Mat = typename Transformer<Scalar>::Mat;
  typename Transformer<Scalar>::Cache cache;
  const bool want_grad = !grad.empty();
  Mat logits = model.forward(enc.tokens, want_grad ? &cache : nullptr);
  Mat dlogits;
  if (want_grad) dlogits.setZero(logits.rows(), logits.cols());

  const std::size_t n = enc.answer_len;
  const std::size_t first = enc.prompt_len - 1;
  LossParts out;
  const double ans_w = (1.0 - alpha) / static_cast<double>(n + 1) * weight;
  for (std::size_t j = 0; j <= n; ++j) {
    const auto r = static_cast<Eigen::Index>(first + j);
    const TokenId target = enc.tokens[first + j + 1];
    out.ans -= log_softmax_at(logits.row(r), static_cast<std::size_t>(target));
    if (want_grad) grad::answer_row(logits.row(r), target, ans_w, dlogits.row(r));
  }
  out.ans /= static_cast<double>(n + 1);

  const double att_scale = normalize && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
  const auto& ids = enc.identifier_entries;
  for (std::size_t j = 0; j < n; ++j) {
    const auto r = static_cast<Eigen::Index>(first + j);
    std::vector<double> l(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) l[i] = static_cast<double>(logits(r, ids[i]));
    const auto& y = enc.labels[enc.statement_of[j]];
    std::vector<double> g;
    if (kind == AttLoss::Mse) {
      for (std::size_t i = 0; i < l.size(); ++i) out.att += (l[i] - y[i]) * (l[i] - y[i]);
      if (want_grad) g = grad::mse_position(l, y);
    } else {
      out.att += kl_position(softmax_probs(l), y);
      if (want_grad) g = grad::kl_position(l, y);
    }
    if (want_grad)
      for (std::size_t i = 0; i < ids.size(); ++i)
        dlogits(r, ids[i]) += static_cast<Scalar>(alpha * att_scale * weight * g[i]);
  }
  out.att *= att_scale;
  out.joint = joint_loss(out.ans, out.att, alpha);
  if (context_lm > 0.0 && first > 0) {
    const double w = context_lm / static_cast<double>(first) * weight;
    for (std::size_t r = 0; r < first; ++r) {
      const auto target = static_cast<std::size_t>(enc.tokens[r + 1]);
      out.context -= log_softmax_at(logits.row(static_cast<Eigen::Index>(r)), target);
      if (want_grad) grad::answer_row(logits.row(static_cast<Eigen::Index>(r)), enc.tokens[r + 1], w, dlogits.row(static_cast<Eigen::Index>(r)));
    }
    out.context /= static_cast<double>(first);
    out.joint += context_lm * out.context;
  }
  if (want_grad) model.backward(cache, dlogits, grad);
  return out;
}

struct LossRecord {
  std::size_t epoch = 0, step = 0;
  double ans = 0.0, att = 0.0, joint = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> trajectory;
  std::vector<double> epoch_mean;  // mean joint loss per epoch
  std::size_t steps = 0;
};

inline void write_trajectory_csv(std::ostream& out, const std::vector<LossRecord>& traj) {
  out << "epoch,step,l_ans,l_att,l_aa\n";
  for (const auto& r : traj) out << r.epoch << ',' << r.step << ',' << r.ans << ',' << r.att << ',' << r.joint << '\n';
}

struct TrainingDiverged : Error {
  using Error::Error;
};

/// Draws `n` distinct admissible distractors for `ex` from `pool`.
inline std::vector<Document> sample_distractors(const Example& ex, const std::vector<Document>& pool, std::size_t n,
                                                Rng& rng, const RefusalFilter& admissible) {
  std::vector<Document> out;
  if (n == 0) return out;
  if (pool.empty()) throw Error("no documents available for distractors");
  std::unordered_set<std::string> taken;
  for (const auto& d : ex.context) taken.insert(d.id);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (std::size_t tries = 0; out.size() < n; ++tries) {
    if (tries > 1000 * n) throw Error("could not find admissible distractors for query '" + ex.query + "'");
    const auto& d = pool[pick(rng)];
    if (taken.count(d.id) || !admissible(ex, d)) continue;
    taken.insert(d.id);
    out.push_back(d);
  }
  return out;
}

/// Adam with cosine-decayed step size and global-norm clipping.
template <typename Scalar>
class AdamCosine {
 public:
  AdamCosine(std::size_t n, const TrainConfig& cfg, std::size_t total_steps)
      : cfg_(cfg), total_(std::max<std::size_t>(1, total_steps)), m_(n, 0.0), v_(n, 0.0) {}

  double rate(std::size_t step) const {
    const double warm = std::floor(cfg_.warmup_frac * static_cast<double>(total_));
    if (static_cast<double>(step) < warm) return cfg_.lr * (static_cast<double>(step) + 1.0) / warm;
    const double progress = (static_cast<double>(step) - warm) / std::max(1.0, static_cast<double>(total_) - warm);
    return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
  }

  void step(std::span<Scalar> params, std::span<const Scalar> grad) {
    double norm = 0.0;
    for (auto g : grad) norm += static_cast<double>(g) * static_cast<double>(g);
    norm = std::sqrt(norm);
    const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    ++t_;
    const double lr = rate(t_ - 1);
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * clip;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      params[i] -= static_cast<Scalar>(lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps));
    }
  }

 private:
  TrainConfig cfg_;
  std::size_t total_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Called after every epoch with the 1-based epoch number.
template <typename Scalar>
using EpochHook = std::function<void(std::size_t epoch, const Transformer<Scalar>& model)>;

/// Joint answer + attribution fine-tuning on teacher-forced gold sequences.
/// Identifier assignments and distractors are redrawn per example per epoch.
template <typename Scalar>
TrainResult train(Transformer<Scalar>& model, const std::vector<Example>& dataset, const TrainConfig& cfg,
                  Marking marking, const Vocabulary& vocab, const IdentifierPool& pool = {},
                  const PromptTemplate& tmpl = {}, const RefusalFilter& admissible = not_in_source_context,
                  const EpochHook<Scalar>& on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw Error("train: empty dataset");
  for (const auto& ex : dataset) {
    if (ex.context.size() < cfg.min_docs)
      throw Error("train: example '" + ex.query + "' has fewer than " + std::to_string(cfg.min_docs) +
                  " documents; pad the dataset first");
    if (ex.context.size() + cfg.num_distractors > pool.size())
      throw Error("train: context plus distractors exceeds the identifier pool");
  }
  const auto doc_pool = document_pool(dataset);
  Rng rng(cfg.seed);
  const std::size_t steps_per_epoch = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  AdamCosine<Scalar> opt(model.num_params(), cfg, steps_per_epoch * cfg.epochs);
  std::vector<Scalar> grad(model.num_params());

  TrainResult res;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double w = 1.0 / static_cast<double>(e - b);
      std::fill(grad.begin(), grad.end(), Scalar(0));
      LossRecord rec{epoch, res.steps, 0.0, 0.0, 0.0};
      for (std::size_t i = b; i < e; ++i) {
        const Example& ex = dataset[order[i]];
        auto distract = sample_distractors(ex, doc_pool, cfg.num_distractors, rng, admissible);
        auto assign = assign_identifiers(ex.context.size() + distract.size(), pool, AssignMode::Random, rng);
        auto enc = encode_training_example(ex, distract, assign, pool, vocab, marking, tmpl, cfg.labels);
        auto parts = example_loss(model, enc, cfg.alpha, cfg.att_loss, cfg.att_normalize, std::span<Scalar>(grad), w,
                                  cfg.context_lm);
        if (!std::isfinite(parts.joint))
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(res.steps) + " (example " + std::to_string(order[i]) +
                                 "): l_ans=" + std::to_string(parts.ans) + " l_att=" + std::to_string(parts.att));
        rec.ans += w * parts.ans;
        rec.att += w * parts.att;
        rec.joint += w * parts.joint;
      }
      opt.step(model.params(), grad);
      if (!model.finite())
        throw TrainingDiverged("non-finite parameters after step " + std::to_string(res.steps));
      epoch_sum += rec.joint * static_cast<double>(e - b);
      res.trajectory.push_back(rec);
      ++res.steps;
    }
    res.epoch_mean.push_back(epoch_sum / static_cast<double>(dataset.size()));
    if (on_epoch) on_epoch(epoch, model);
  }
  return res;
}

}  // namespace lodit
