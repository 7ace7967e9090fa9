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

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lodit/attribution.hpp"
#include "lodit/contribution.hpp"
#include "lodit/corpus.hpp"
#include "lodit/generate.hpp"
#include "lodit/metrics.hpp"

namespace lodit {

struct EvalConfig {
  AggregationConfig agg;
  DecodeConfig decode;
  AssignMode assign = AssignMode::Random;
  bool reverse = false;
  std::uint64_t seed = 11;
  ContributionSource source = ContributionSource::Finetuned;
  AblateRepeatOptions ablate;
};

/// Generation plus contributions for one query; aggregation-independent so
/// it can be re-aggregated under different thresholds.
struct Collected {
  Example example;  // context in prompt order
  IdentifierAssignment assignment;
  Generation generation;
  std::vector<Statement> statements;
  std::vector<ContributionMatrix> matrices;
  std::size_t passes = 0;
  double millis = 0.0;
};

inline Rng example_rng(std::uint64_t seed, std::size_t index) {
  return Rng(seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1));
}

/// Runs one query through generation and the configured contribution source.
template <typename Scalar>
Collected collect(const Transformer<Scalar>& model, const PromptSetup& setup, const Example& example,
                  std::size_t index, const EvalConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Collected c;
  c.example = example;
  if (cfg.reverse) std::reverse(c.example.context.begin(), c.example.context.end());
  Rng rng = example_rng(cfg.seed, index);
  c.assignment = assign_identifiers(c.example.context.size(), setup.pool, cfg.assign, rng);
  const auto prompt = setup.prompt_tokens(c.example.query, c.example.context, c.assignment);
  c.generation = generate(model, prompt, setup.identifier_entries(c.assignment), setup.vocab, cfg.decode);
  c.passes = c.generation.passes;
  c.statements = segment_statements(c.generation.answer, setup.vocab);
  if (cfg.source == ContributionSource::AblateRepeat) {
    auto r = contributions_ablate_repeat(model, setup, c.example.query, c.example.context, c.assignment,
                                         c.generation.answer, c.generation.stopped_by_eos, c.statements, cfg.ablate,
                                         &c.generation.records);
    c.matrices = std::move(r.matrices);
    c.passes += r.passes;
  } else {
    c.matrices = contributions_from_records(c.generation.records, c.statements, c.example.context.size(), cfg.source);
  }
  c.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

inline EvalItem finalize(const Collected& c, const AggregationConfig& agg, const std::string& refusal) {
  if (c.generation.answer.empty()) return {c.example, refusal_answer(refusal)};
  return {c.example, attribute(c.statements, c.matrices, agg, refusal)};
}

struct MetricsReport {
  std::string label;
  std::optional<double> f1_ac, f1_gr, f1_gc;
  double trust = 0.0;
  double attribution_em = 0.0;
  double latency_ms = 0.0;
  double latency_sd_ms = 0.0;
  std::size_t queries = 0;
  std::size_t passes = 0;
  // config echo
  Marking marking = Marking::BA;
  AggregationConfig agg;
  std::size_t k = 0;
  ContributionSource source = ContributionSource::Finetuned;
};

/// Scores finalized items. Not-applicable metrics count as zero in TRUST.
inline MetricsReport score(const std::vector<EvalItem>& items, const Judge& judge) {
  MetricsReport r;
  if (auto ac = f1_answer_correctness(items)) r.f1_ac = ac->f1;
  r.f1_gr = f1_grounded_refusal(items).f1;
  if (auto gc = f1_citation_groundedness(items, judge)) r.f1_gc = gc->f1;
  r.trust = trust_score(r.f1_ac.value_or(0.0), r.f1_gr.value_or(0.0), r.f1_gc.value_or(0.0));
  r.attribution_em = attribution_exact_match(items);
  r.queries = items.size();
  return r;
}

struct Evaluation {
  MetricsReport report;
  std::vector<Collected> collected;
  std::vector<EvalItem> items;
};

template <typename Scalar>
std::vector<Collected> collect_all(const Transformer<Scalar>& model, const PromptSetup& setup,
                                   const std::vector<Example>& data, const EvalConfig& cfg) {
  std::vector<Collected> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(collect(model, setup, data[i], i, cfg));
  return out;
}

inline Evaluation evaluate_collected(std::vector<Collected> collected, const PromptSetup& setup,
                                     const EvalConfig& cfg, const Judge& judge) {
  Evaluation ev;
  ev.collected = std::move(collected);
  double ms = 0.0, ms2 = 0.0;
  for (const auto& c : ev.collected) {
    ev.items.push_back(finalize(c, cfg.agg, setup.refusal));
    ev.report.passes += c.passes;
    ms += c.millis;
    ms2 += c.millis * c.millis;
  }
  auto passes = ev.report.passes;
  ev.report = score(ev.items, judge);
  ev.report.passes = passes;
  const double n = static_cast<double>(std::max<std::size_t>(1, ev.collected.size()));
  ev.report.latency_ms = ms / n;
  ev.report.latency_sd_ms = std::sqrt(std::max(0.0, ms2 / n - (ms / n) * (ms / n)));
  ev.report.marking = setup.marking;
  ev.report.agg = cfg.agg;
  ev.report.k = ev.collected.empty() ? 0 : ev.collected.front().example.context.size();
  ev.report.source = cfg.source;
  return ev;
}

template <typename Scalar>
Evaluation evaluate(const Transformer<Scalar>& model, const PromptSetup& setup, const std::vector<Example>& data,
                    const EvalConfig& cfg, const Judge& judge) {
  return evaluate_collected(collect_all(model, setup, data, cfg), setup, cfg, judge);
}

// --- latency -------------------------------------------------------------------------

struct LatencyStats {
  double mean_ms = 0.0;
  double sd_ms = 0.0;
  std::size_t samples = 0;
};

/// Mean wall-clock milliseconds per query over `repetitions` sweeps of
/// `queries`, after one untimed warmup sweep.
inline LatencyStats measure_latency(const std::function<void(std::size_t)>& run_query, std::size_t queries,
                                    std::size_t repetitions) {
  if (queries == 0) throw Error("measure_latency: no queries");
  if (repetitions == 0) throw Error("measure_latency: no repetitions");
  for (std::size_t q = 0; q < queries; ++q) run_query(q);
  std::vector<double> per_rep;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t q = 0; q < queries; ++q) run_query(q);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    per_rep.push_back(ms / static_cast<double>(queries));
  }
  LatencyStats s;
  s.samples = per_rep.size();
  for (double v : per_rep) s.mean_ms += v;
  s.mean_ms /= static_cast<double>(per_rep.size());
  for (double v : per_rep) s.sd_ms += (v - s.mean_ms) * (v - s.mean_ms);
  s.sd_ms = per_rep.size() > 1 ? std::sqrt(s.sd_ms / static_cast<double>(per_rep.size() - 1)) : 0.0;
  return s;
}

// --- robustness sweeps ---------------------------------------------------------------

/// Keeps `k` documents (cited ones first, then context order, original
/// relative order preserved) or pads with admissible pool documents. Gold
/// citations to dropped documents are removed; an example left with no
/// cited document becomes a refusal.
inline Example reshape_context(const Example& ex, std::size_t k, const std::vector<Document>& pool,
                               const RefusalFilter& admissible, Rng& rng, const std::string& refusal) {
  if (k == 0) throw Error("context size must be >= 1");
  if (ex.context.size() >= k) {
    const auto cited = ex.cited_ids();
    std::vector<bool> keep(ex.context.size(), false);
    std::size_t kept = 0;
    for (std::size_t p = 0; p < ex.context.size() && kept < k; ++p)
      if (cited.count(ex.context[p].id)) keep[p] = true, ++kept;
    for (std::size_t p = 0; p < ex.context.size() && kept < k; ++p)
      if (!keep[p]) keep[p] = true, ++kept;
    Example out = ex;
    out.context.clear();
    std::set<std::string> ids;
    for (std::size_t p = 0; p < ex.context.size(); ++p)
      if (keep[p]) out.context.push_back(ex.context[p]), ids.insert(ex.context[p].id);
    bool any = false;
    for (auto& g : out.gold) {
      std::erase_if(g.cites, [&](const std::string& c) { return !ids.count(c); });
      any = any || !g.cites.empty();
    }
    if (!ex.is_refusal && !any) {
      out.gold = {{refusal, {}}};
      out.is_refusal = true;
    }
    return out;
  }
  std::vector<Document> eligible;
  for (const auto& d : pool)
    if (admissible(ex, d)) eligible.push_back(d);
  return pad_context(ex, eligible, k, rng);
}

inline const std::vector<std::size_t>& default_context_lengths() {
  static const std::vector<std::size_t> ks{2, 4, 5, 6, 8, 10};
  return ks;
}

template <typename Scalar>
std::vector<MetricsReport> sweep_context_length(const Transformer<Scalar>& model, const PromptSetup& setup,
                                                const std::vector<Example>& data, const std::vector<std::size_t>& ks,
                                                const EvalConfig& cfg, const Judge& judge,
                                                const RefusalFilter& admissible = not_in_source_context) {
  for (auto k : ks)
    if (k > setup.pool.size())
      throw Error("context length " + std::to_string(k) + " exceeds the identifier pool of " +
                  std::to_string(setup.pool.size()));
  const auto pool = document_pool(data);
  std::vector<MetricsReport> rows;
  for (auto k : ks) {
    Rng rng(cfg.seed ^ (0xC0FFEEull + k));
    std::vector<Example> reshaped;
    for (const auto& ex : data) {
      if (ex.context.size() == k) {
        reshaped.push_back(ex);
        continue;
      }
      std::vector<Document> rest;
      for (const auto& d : pool)
        if (not_in_source_context(ex, d)) rest.push_back(d);
      reshaped.push_back(reshape_context(ex, k, rest, admissible, rng, setup.refusal));
    }
    auto r = evaluate(model, setup, reshaped, cfg, judge).report;
    r.label = "k=" + std::to_string(k);
    rows.push_back(std::move(r));
  }
  return rows;
}

template <typename Scalar>
struct Checkpoint {
  std::string name;
  const Transformer<Scalar>* model;
};

/// {Rand, Alph} x {Vanilla, Rev} per checkpoint.
template <typename Scalar>
std::vector<MetricsReport> sweep_ordering(const std::vector<Checkpoint<Scalar>>& checkpoints, const PromptSetup& setup,
                                          const std::vector<Example>& data, const EvalConfig& cfg,
                                          const Judge& judge) {
  std::vector<MetricsReport> rows;
  for (const auto& ck : checkpoints)
    for (auto mode : {AssignMode::Random, AssignMode::Alphabetical})
      for (bool rev : {false, true}) {
        EvalConfig c = cfg;
        c.assign = mode;
        c.reverse = rev;
        auto r = evaluate(*ck.model, setup, data, c, judge).report;
        r.label = ck.name + ":" + (mode == AssignMode::Random ? "Rand" : "Alph") + "-" + (rev ? "Rev" : "Vanilla");
        rows.push_back(std::move(r));
      }
  return rows;
}

inline const std::vector<double>& default_lambdas() {
  static const std::vector<double> ls{0.25, 0.5, 0.75};
  return ls;
}

/// Re-aggregates cached contributions per lambda; generation runs once per query.
inline std::vector<MetricsReport> sweep_lambda(const std::vector<Collected>& collected, const PromptSetup& setup,
                                               const std::vector<double>& lambdas, const EvalConfig& cfg,
                                               const Judge& judge) {
  std::vector<MetricsReport> rows;
  for (double l : lambdas) {
    EvalConfig c = cfg;
    c.agg.lambda = l;
    auto r = evaluate_collected(collected, setup, c, judge).report;
    std::ostringstream name;
    name << "lambda=" << l;
    r.label = name.str();
    rows.push_back(std::move(r));
  }
  return rows;
}

template <typename Scalar>
std::vector<MetricsReport> sweep_lambda(const Transformer<Scalar>& model, const PromptSetup& setup,
                                        const std::vector<Example>& data, const std::vector<double>& lambdas,
                                        const EvalConfig& cfg, const Judge& judge) {
  return sweep_lambda(collect_all(model, setup, data, cfg), setup, lambdas, cfg, judge);
}

// --- report emission ---------------------------------------------------------------------

inline std::string pct(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

inline void write_reports_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
  out << "label,marking,agg,phi,lambda,k,source,f1_ac,f1_gr,f1_gc,trust,attr_em,latency_ms,latency_sd_ms,passes\n";
  for (const auto& r : rows) {
    const double phi = r.agg.op == Aggregator::Prop ? r.agg.phi_prop : r.agg.op == Aggregator::Max ? r.agg.phi_max : r.agg.phi_avg;
    out << r.label << ',' << to_string(r.marking) << ',' << to_string(r.agg.op) << ',' << phi << ',' << r.agg.lambda
        << ',' << r.k << ',' << to_string(r.source) << ',' << pct(r.f1_ac) << ',' << pct(r.f1_gr) << ','
        << pct(r.f1_gc) << ',' << pct(r.trust) << ',' << pct(r.attribution_em) << ',' << std::fixed
        << std::setprecision(3) << r.latency_ms << ',' << r.latency_sd_ms << ',' << r.passes << '\n';
    out.unsetf(std::ios::fixed);
  }
}

inline void write_summary(std::ostream& out, const std::vector<MetricsReport>& rows) {
  for (const auto& r : rows) {
    out << (r.label.empty() ? "run" : r.label) << ": F1AC " << pct(r.f1_ac) << "  F1GR " << pct(r.f1_gr) << "  F1GC "
        << pct(r.f1_gc) << "  TRUST " << pct(r.trust) << "  attr-EM " << pct(r.attribution_em) << "  ("
        << r.queries << " queries, " << std::fixed << std::setprecision(2) << r.latency_ms << " ms/query, "
        << to_string(r.source) << ")\n";
    out.unsetf(std::ios::fixed);
  }
}

}  // namespace lodit
