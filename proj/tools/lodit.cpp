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

// lodit command-line tool.
//
//   lodit synth    --config C --out data.jsonl
//   lodit mark     --data data.jsonl [--marking ba]
//   lodit train    --config C --data train.jsonl --out-dir DIR [--init backbone.bin]
//   lodit infer    --model M --vocab V --data data.jsonl [--agg prop --phi 3 --lambda 0.75]
//   lodit evaluate --model M --vocab V --data data.jsonl [--source finetuned] [--judge lexical]
//   lodit compare-debiasing --model M --frozen F --vocab V --data data.jsonl
//   lodit sweep    --kind context|ordering|lambda --model M --vocab V --data data.jsonl

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "lodit/lodit.hpp"

namespace {

using namespace lodit;
using Model = Transformer<float>;

struct Common {
  std::string config;
  std::string marking = "ba";
  std::string agg;
  std::optional<double> phi, lambda;
  std::optional<std::size_t> k;
  std::uint64_t seed = 11;
  std::string judge = "lexical";
  std::string judge_cmd;
  bool eq6_as_printed = false;
  std::string csv;
};

struct Options {
  Common c;
  std::string data, out, out_dir, model, vocab, frozen, init, source = "finetuned", kind = "lambda";
  std::vector<std::string> vocab_data, checkpoints;
  std::vector<std::size_t> ks;
  std::vector<double> lambdas;
  double refusal_ratio = 0.25;
  std::size_t pad = 5;
};

KeyValueConfig load_config(const Common& c) { return c.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(c.config); }

void warn_unused(const KeyValueConfig& kv) {
  for (const auto& k : kv.unused()) std::cerr << "warning: config key '" << k << "' is not used by this command\n";
}

PromptSetup make_setup(const KeyValueConfig& kv, const Common& c) {
  PromptSetup s;
  if (auto t = kv.get<std::string>("template", ""); !t.empty()) s.tmpl = PromptTemplate::load(t);
  s.tmpl.instruction = kv.get<std::string>("instruction", s.tmpl.instruction);
  s.refusal = kv.get<std::string>("refusal", s.refusal);
  s.marking = parse_marking(c.marking);
  return s;
}

EvalConfig make_eval(const KeyValueConfig& kv, const Common& c) {
  EvalConfig e;
  e.agg = AggregationConfig::from(kv);
  if (!c.agg.empty()) e.agg.op = parse_aggregator(c.agg);
  if (c.phi) {
    if (e.agg.op == Aggregator::Prop) e.agg.phi_prop = *c.phi;
    if (e.agg.op == Aggregator::Max) e.agg.phi_max = *c.phi;
    if (e.agg.op == Aggregator::Avg) e.agg.phi_avg = *c.phi;
  }
  if (c.lambda) e.agg.lambda = *c.lambda;
  e.agg.validate();
  e.decode.max_len = kv.get<std::size_t>("max_len", e.decode.max_len);
  e.seed = c.seed;
  e.ablate.as_printed = c.eq6_as_printed;
  return e;
}

std::unique_ptr<Judge> make_judge(const Common& c) {
  if (c.judge == "lexical") return std::make_unique<LexicalJudge>();
  if (c.judge == "external") {
    if (c.judge_cmd.empty()) throw Error("--judge external needs --judge-cmd");
    return std::make_unique<ExternalJudge>(c.judge_cmd);
  }
  throw Error("unknown judge '" + c.judge + "'");
}

ContributionSource parse_source(const std::string& s) {
  if (s == "finetuned") return ContributionSource::Finetuned;
  if (s == "frozen") return ContributionSource::Frozen;
  if (s == "ablate-repeat") return ContributionSource::AblateRepeat;
  throw Error("unknown contribution source '" + s + "'");
}

/// Pads short contexts to --k (or 5) documents so every query sees the same K.
std::vector<Example> load_eval_data(const Options& o) {
  auto data = load_dataset(o.data);
  const std::size_t k = o.c.k.value_or(5);
  Rng rng(o.c.seed);
  const auto pool = document_pool(data);
  std::vector<Example> out;
  for (const auto& ex : data) {
    std::vector<Document> rest;
    for (const auto& d : pool)
      if (not_in_source_context(ex, d)) rest.push_back(d);
    out.push_back(ex.context.size() == k ? ex : reshape_context(ex, k, rest, not_in_source_context, rng, kDefaultRefusal));
  }
  return out;
}

Model load_model(const std::string& path, const Vocabulary& vocab) {
  if (path.empty()) throw Error("--model is required");
  return Model::load(path, vocab.hash());
}

void emit(const std::vector<MetricsReport>& rows, const Common& c) {
  write_summary(std::cout, rows);
  if (!c.csv.empty()) {
    std::ofstream out(c.csv);
    if (!out) throw Error("cannot write '" + c.csv + "'");
    write_reports_csv(out, rows);
  }
  for (const auto& r : rows)
    for (const auto& v : {r.f1_ac, r.f1_gr, r.f1_gc, std::optional<double>(r.trust)})
      if (v && !(*v >= 0.0 && *v <= 1.0)) throw Error("metric outside [0,1] in row '" + r.label + "'");
}

int cmd_synth(const Options& o) {
  auto kv = load_config(o.c);
  auto sc = SyntheticTaskConfig::from(kv);
  warn_unused(kv);
  if (o.out.empty()) throw Error("--out is required");
  sc.seed = o.c.seed;
  auto data = gen_synthetic(sc);
  Rng rng(o.c.seed);
  data = pad_dataset(data, o.pad, rng);
  if (o.refusal_ratio > 0.0)
    data = augment_refusals(data, o.refusal_ratio, document_pool(data), rng, kDefaultRefusal, synthetic_irrelevant);
  save_dataset(o.out, data);
  std::cout << data.size() << " examples, " << 100.0 * refusal_fraction(data) << "% refusals -> " << o.out << "\n";
  return 0;
}

int cmd_mark(const Options& o) {
  auto kv = load_config(o.c);
  const auto setup = make_setup(kv, o.c);
  warn_unused(kv);
  Rng rng(o.c.seed);
  for (const auto& ex : load_dataset(o.data)) {
    const auto a = assign_identifiers(ex.context.size(), setup.pool, AssignMode::Random, rng);
    std::cout << build_prompt(ex.query, mark_context(ex.context, a, setup.pool, setup.marking), setup.tmpl) << "\n\n";
  }
  return 0;
}

int cmd_train(const Options& o) {
  auto kv = load_config(o.c);
  auto setup = make_setup(kv, o.c);
  auto tc = TrainConfig::from(kv);
  auto mc = ModelConfig::from(kv);
  const RefusalFilter admissible = kv.get<bool>("synthetic_distractors", false) ? RefusalFilter(synthetic_irrelevant)
                                                                                 : RefusalFilter(not_in_source_context);
  warn_unused(kv);
  tc.seed = o.c.seed;
  if (o.out_dir.empty()) throw Error("--out-dir is required");
  std::filesystem::create_directories(o.out_dir);
  Rng rng(o.c.seed);
  auto data = pad_dataset(load_dataset(o.data), tc.min_docs, rng);

  std::vector<Example> covered = data;
  for (const auto& p : o.vocab_data) {
    auto extra = load_dataset(p);
    covered.insert(covered.end(), extra.begin(), extra.end());
  }
  const auto vocab_path = (std::filesystem::path(o.out_dir) / "vocab.txt").string();
  if (!o.vocab.empty())
    setup.vocab = Vocabulary::load(o.vocab);
  else
    setup.vocab = Vocabulary::build(setup.pool, covered, setup.tmpl, setup.refusal);
  setup.vocab.save(vocab_path);

  mc.vocab_size = setup.vocab.size();
  Model model = o.init.empty() ? Model(mc, o.c.seed) : Model::load(o.init, setup.vocab.hash());
  const auto res = train(model, data, tc, setup.marking, setup.vocab, setup.pool, setup.tmpl, admissible,
                         EpochHook<float>([&](std::size_t epoch, const Model& m) {
                           const auto p = std::filesystem::path(o.out_dir) / ("model-epoch" + std::to_string(epoch) + ".bin");
                           m.save(p.string(), setup.vocab.hash());
                           std::cout << "epoch " << epoch << " -> " << p.string() << std::endl;
                         }));
  std::ofstream traj(std::filesystem::path(o.out_dir) / "trajectory.csv");
  write_trajectory_csv(traj, res.trajectory);
  for (std::size_t e = 0; e < res.epoch_mean.size(); ++e)
    std::cout << "epoch " << e + 1 << " mean joint loss " << res.epoch_mean[e] << "\n";
  return 0;
}

int cmd_infer(const Options& o) {
  auto kv = load_config(o.c);
  auto setup = make_setup(kv, o.c);
  const auto cfg = make_eval(kv, o.c);
  warn_unused(kv);
  setup.vocab = Vocabulary::load(o.vocab);
  const auto model = load_model(o.model, setup.vocab);
  const auto data = load_dataset(o.data);
  std::ofstream file;
  if (!o.out.empty()) file.open(o.out);
  std::ostream& out = o.out.empty() ? std::cout : file;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto item = finalize(collect(model, setup, data[i], i, cfg), cfg.agg, setup.refusal);
    out << to_json(data[i].query, item.prediction).dump() << '\n';
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  auto kv = load_config(o.c);
  auto setup = make_setup(kv, o.c);
  auto cfg = make_eval(kv, o.c);
  warn_unused(kv);
  cfg.source = parse_source(o.source);
  setup.vocab = Vocabulary::load(o.vocab);
  const auto model = load_model(o.model, setup.vocab);
  const auto judge = make_judge(o.c);
  auto r = evaluate(model, setup, load_eval_data(o), cfg, *judge).report;
  r.label = o.source;
  emit({r}, o.c);
  return 0;
}

int cmd_compare(const Options& o) {
  auto kv = load_config(o.c);
  auto setup = make_setup(kv, o.c);
  auto cfg = make_eval(kv, o.c);
  warn_unused(kv);
  setup.vocab = Vocabulary::load(o.vocab);
  const auto tuned = load_model(o.model, setup.vocab);
  const auto judge = make_judge(o.c);
  const auto data = load_eval_data(o);
  std::vector<MetricsReport> rows;
  for (auto src : {ContributionSource::Finetuned, ContributionSource::AblateRepeat}) {
    cfg.source = src;
    auto r = evaluate(tuned, setup, data, cfg, *judge).report;
    r.label = std::string(to_string(src));
    rows.push_back(r);
  }
  if (!o.frozen.empty()) {
    const auto frozen = load_model(o.frozen, setup.vocab);
    cfg.source = ContributionSource::Frozen;
    auto r = evaluate(frozen, setup, data, cfg, *judge).report;
    r.label = "frozen";
    rows.push_back(r);
  }
  emit(rows, o.c);
  if (rows[1].passes != 2 * rows[0].passes) throw Error("ablate-repeat pass count is not twice the readout count");
  return 0;
}

int cmd_sweep(const Options& o) {
  auto kv = load_config(o.c);
  auto setup = make_setup(kv, o.c);
  auto cfg = make_eval(kv, o.c);
  warn_unused(kv);
  cfg.source = parse_source(o.source);
  setup.vocab = Vocabulary::load(o.vocab);
  const auto judge = make_judge(o.c);
  const auto model = load_model(o.model, setup.vocab);
  std::vector<MetricsReport> rows;
  if (o.kind == "context") {
    rows = sweep_context_length(model, setup, load_dataset(o.data), o.ks.empty() ? default_context_lengths() : o.ks,
                                cfg, *judge);
  } else if (o.kind == "ordering") {
    std::vector<Model> extra;
    std::vector<std::string> names{"final"};
    extra.reserve(o.checkpoints.size());
    for (const auto& spec : o.checkpoints) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw Error("--checkpoint expects name=path, got '" + spec + "'");
      names.push_back(spec.substr(0, eq));
      extra.push_back(load_model(spec.substr(eq + 1), setup.vocab));
    }
    std::vector<Checkpoint<float>> cks{{names[0], &model}};
    for (std::size_t i = 0; i < extra.size(); ++i) cks.push_back({names[i + 1], &extra[i]});
    rows = sweep_ordering(cks, setup, load_eval_data(o), cfg, *judge);
  } else if (o.kind == "lambda") {
    rows = sweep_lambda(model, setup, load_eval_data(o), o.lambdas.empty() ? default_lambdas() : o.lambdas, cfg, *judge);
  } else {
    throw Error("unknown sweep kind '" + o.kind + "'");
  }
  emit(rows, o.c);
  return 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--marking", c.marking, "ba, bas or aw")->check(CLI::IsMember({"ba", "bas", "aw"}, CLI::ignore_case));
  app->add_option("--agg", c.agg, "prop, max or avg")->check(CLI::IsMember({"prop", "max", "avg"}, CLI::ignore_case));
  app->add_option("--phi", c.phi, "threshold of the selected aggregator");
  app->add_option("--lambda", c.lambda, "proportion for prop aggregation");
  app->add_option("--k", c.k, "documents per context");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--judge", c.judge, "lexical or external")->check(CLI::IsMember({"lexical", "external"}));
  app->add_option("--judge-cmd", c.judge_cmd, "shell command for the external judge");
  app->add_flag("--eq6-as-printed", c.eq6_as_printed, "ablate-repeat as log p(without) - log p(with)");
  app->add_option("--csv", c.csv, "write the report rows as CSV");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attributed answer generation with identifier-token logits"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate the synthetic lookup dataset");
  auto* mark = app.add_subcommand("mark", "print marked prompts");
  auto* tr = app.add_subcommand("train", "joint answer and attribution training");
  auto* infer = app.add_subcommand("infer", "attributed answers as JSONL");
  auto* eval = app.add_subcommand("evaluate", "F1AC, F1GR, F1GC and TRUST");
  auto* cmp = app.add_subcommand("compare-debiasing", "logit readout vs ablate-repeat vs frozen model");
  auto* sweep = app.add_subcommand("sweep", "context length, ordering or lambda robustness");
  for (auto* s : {synth, mark, tr, infer, eval, cmp, sweep}) add_common(s, o.c);

  synth->add_option("--out", o.out, "output JSONL")->required();
  synth->add_option("--refusal-ratio", o.refusal_ratio, "share of refusal examples");
  synth->add_option("--pad", o.pad, "minimum documents per context");
  mark->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
  tr->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
  tr->add_option("--out-dir", o.out_dir)->required();
  tr->add_option("--init", o.init, "start from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--vocab", o.vocab, "reuse this vocabulary")->check(CLI::ExistingFile);
  tr->add_option("--vocab-data", o.vocab_data, "extra datasets the vocabulary must cover");
  for (auto* s : {infer, eval, cmp, sweep}) {
    s->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
    s->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
    s->add_option("--vocab", o.vocab)->required()->check(CLI::ExistingFile);
  }
  infer->add_option("--out", o.out, "output JSONL (default stdout)");
  eval->add_option("--source", o.source, "finetuned, frozen or ablate-repeat");
  sweep->add_option("--source", o.source, "finetuned, frozen or ablate-repeat");
  cmp->add_option("--frozen", o.frozen, "checkpoint before attribution training")->check(CLI::ExistingFile);
  sweep->add_option("--kind", o.kind, "context, ordering or lambda")->check(CLI::IsMember({"context", "ordering", "lambda"}));
  sweep->add_option("--ks", o.ks, "context lengths");
  sweep->add_option("--lambdas", o.lambdas, "proportions");
  sweep->add_option("--checkpoint", o.checkpoints, "extra name=path checkpoints for the ordering sweep");

  CLI11_PARSE(app, argc, argv);
  try {
    if (synth->parsed()) return cmd_synth(o);
    if (mark->parsed()) return cmd_mark(o);
    if (tr->parsed()) return cmd_train(o);
    if (infer->parsed()) return cmd_infer(o);
    if (eval->parsed()) return cmd_evaluate(o);
    if (cmp->parsed()) return cmd_compare(o);
    if (sweep->parsed()) return cmd_sweep(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
