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

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "lodit/contribution.hpp"
#include "support.hpp"

namespace {

using namespace lodit;

struct Rollout {
  testing_support::Fixture f{6};
  Transformer<float> model{f.model_config(16, 1, 2), 12};
  IdentifierAssignment asg;
  Tokens prompt;
  Generation gen;
  std::vector<Statement> statements;

  Rollout() {
    Rng rng(4);
    asg = assign_identifiers(5, f.setup.pool, AssignMode::Random, rng);
    prompt = f.setup.prompt_tokens(f.data[0].query, f.data[0].context, asg);
    DecodeConfig d;
    d.max_len = 10;
    gen = generate(model, prompt, f.setup.identifier_entries(asg), f.setup.vocab, d);
    statements = segment_statements(gen.answer, f.setup.vocab);
  }
};

TEST(Contribution, ShapeFollowsStatements) {
  std::vector<StepRecord> recs(3);
  for (std::size_t j = 0; j < 3; ++j) recs[j] = {j, 0, {1, 2, 3, 4, 5}, 0, 0};
  const auto ms = contributions_from_records(recs, {{0, 0, 3, "a b c"}}, 5);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].values.rows(), 3);
  EXPECT_EQ(ms[0].values.cols(), 5);
  EXPECT_EQ(ms[0].values(2, 4), 5.0);
}

TEST(Contribution, MisalignedSpansAreRejected) {
  std::vector<StepRecord> recs(3);
  for (std::size_t j = 0; j < 3; ++j) recs[j] = {j, 0, {1, 2}, 0, 0};
  EXPECT_THROW(contributions_from_records(recs, {{0, 0, 2, "a b"}}, 2), Error);
  EXPECT_THROW(contributions_from_records(recs, {{0, 1, 3, "b c"}}, 2), Error);
  EXPECT_THROW(contributions_from_records(recs, {{0, 0, 3, "a b c"}}, 3), Error);
}

TEST(Contribution, RecordsHoldRawPreMaskLogits) {
  Rollout r;
  ASSERT_FALSE(r.gen.records.empty());
  EXPECT_EQ(r.gen.passes, r.gen.answer.size() + (r.gen.stopped_by_eos ? 1 : 0));
  const auto ids = r.f.setup.identifier_entries(r.asg);
  Tokens seq = r.prompt;
  for (std::size_t j = 0; j < r.gen.records.size(); ++j) {
    const auto logits = r.model.forward(seq);
    const auto row = logits.row(logits.rows() - 1);
    double sum = 0;
    for (Eigen::Index i = 0; i < row.size(); ++i) sum += row[i];
    EXPECT_EQ(r.gen.records[j].row_checksum, sum);
    for (std::size_t k = 0; k < ids.size(); ++k) EXPECT_EQ(r.gen.records[j].identifier_logits[k], row[ids[k]]);
    seq.push_back(r.gen.answer[j]);
  }
}

TEST(Contribution, ColumnPermutationEquivariance) {
  Rollout r;
  // Fixed logit stream: the raw rows of one replay.
  Tokens seq = r.prompt;
  std::vector<Eigen::RowVectorXf> rows;
  for (std::size_t j = 0; j < r.gen.answer.size(); ++j) {
    const auto l = r.model.forward(seq);
    rows.emplace_back(l.row(l.rows() - 1));
    seq.push_back(r.gen.answer[j]);
  }
  auto extract = [&](const IdentifierAssignment& a) {
    const auto ids = r.f.setup.identifier_entries(a);
    std::vector<StepRecord> recs;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      StepRecord rec{j, r.gen.answer[j], {}, 0, 0};
      for (auto id : ids) rec.identifier_logits.push_back(rows[j][id]);
      recs.push_back(rec);
    }
    return contributions_from_records(recs, r.statements, a.size());
  };
  const auto base = extract(r.asg);
  std::mt19937_64 rng(31);
  std::vector<std::size_t> perm(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto moved = extract(r.asg.permuted(perm));
    for (std::size_t s = 0; s < base.size(); ++s)
      for (std::size_t k = 0; k < perm.size(); ++k)
        ASSERT_EQ(moved[s].values.col(static_cast<Eigen::Index>(k)), base[s].values.col(static_cast<Eigen::Index>(perm[k])));
  }
}

TEST(Contribution, LogRatioOracle) {
  EXPECT_NEAR(log_ratio(std::log(0.2), std::log(0.1)), 0.6931471805599453, 1e-12);
  EXPECT_NEAR(log_ratio(std::log(0.2), std::log(0.1), true), -0.6931471805599453, 1e-12);
  EXPECT_DOUBLE_EQ(log_ratio(-1e6, std::log(1e-12)), 0.0);
  EXPECT_TRUE(std::isfinite(log_ratio(-std::numeric_limits<double>::infinity(), 0.0)));
}

TEST(Contribution, AblateRepeatPassesAreTwiceReadout) {
  Rollout r;
  const auto res = contributions_ablate_repeat(r.model, r.f.setup, r.f.data[0].query, r.f.data[0].context, r.asg,
                                               r.gen.answer, r.gen.stopped_by_eos, r.statements, {},
                                               &r.gen.records);
  EXPECT_EQ(res.passes + r.gen.passes, 2 * r.gen.passes);
  ASSERT_EQ(res.matrices.size(), r.statements.size());
  for (const auto& m : res.matrices) {
    EXPECT_TRUE(m.values.allFinite());
    EXPECT_EQ(m.source, ContributionSource::AblateRepeat);
  }
}

TEST(Contribution, ReusedRecordsMatchFullReplay) {
  Rollout r;
  const auto q = r.f.data[0].query;
  const auto& ctx = r.f.data[0].context;
  const auto reused = contributions_ablate_repeat(r.model, r.f.setup, q, ctx, r.asg, r.gen.answer,
                                                  r.gen.stopped_by_eos, r.statements, {}, &r.gen.records);
  const auto replayed =
      contributions_ablate_repeat(r.model, r.f.setup, q, ctx, r.asg, r.gen.answer, r.gen.stopped_by_eos, r.statements);
  EXPECT_EQ(replayed.passes, 2 * reused.passes);
  for (std::size_t s = 0; s < reused.matrices.size(); ++s)
    EXPECT_LT((reused.matrices[s].values - replayed.matrices[s].values).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Contribution, ContextFreeModelGivesZeroMatrix) {
  Rollout r;
  Transformer<float> flat(r.f.model_config(16, 1, 2), 1);
  auto p = flat.params();
  std::fill(p.begin(), p.end(), 0.0f);
  const auto bout = flat.layout().bout;
  for (std::size_t i = 0; i < r.f.setup.vocab.size(); ++i) p[bout + i] = static_cast<float>(i % 7) - 3.0f;
  for (auto scope : {AblationScope::WholeContext, AblationScope::PerDocument}) {
    AblateRepeatOptions opt;
    opt.scope = scope;
    const auto res = contributions_ablate_repeat(flat, r.f.setup, r.f.data[0].query, r.f.data[0].context, r.asg,
                                                 r.gen.answer, false, r.statements, opt);
    for (const auto& m : res.matrices) EXPECT_EQ(m.values.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Contribution, AsPrintedFlipsSign) {
  Rollout r;
  AblateRepeatOptions lit;
  lit.as_printed = true;
  const auto q = r.f.data[0].query;
  const auto& ctx = r.f.data[0].context;
  const auto a = contributions_ablate_repeat(r.model, r.f.setup, q, ctx, r.asg, r.gen.answer, false, r.statements);
  const auto b = contributions_ablate_repeat(r.model, r.f.setup, q, ctx, r.asg, r.gen.answer, false, r.statements, lit);
  for (std::size_t s = 0; s < a.matrices.size(); ++s) EXPECT_EQ(a.matrices[s].values, -b.matrices[s].values);
}

TEST(Contribution, PerDocumentScopeCountsPasses) {
  Rollout r;
  AblateRepeatOptions opt;
  opt.scope = AblationScope::PerDocument;
  const auto res = contributions_ablate_repeat(r.model, r.f.setup, r.f.data[0].query, r.f.data[0].context, r.asg,
                                               r.gen.answer, r.gen.stopped_by_eos, r.statements, opt, &r.gen.records);
  EXPECT_EQ(res.passes, 5 * r.gen.passes);
}

TEST(Contribution, CsvLayout) {
  ContributionMatrix m{0, Eigen::MatrixXd(2, 2), ContributionSource::Finetuned};
  m.values << 1, 2, 3, 4;
  std::ostringstream out;
  write_contributions_csv(out, {m});
  EXPECT_EQ(out.str(),
            "statement,token,doc,value,source\n0,0,1,1,finetuned\n0,0,2,2,finetuned\n0,1,1,3,finetuned\n0,1,2,4,"
            "finetuned\n");
}

}  // namespace
