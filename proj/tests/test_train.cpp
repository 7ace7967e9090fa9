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

#include <sstream>

#include "lodit/train.hpp"
#include "support.hpp"

namespace {

using namespace lodit;

TrainConfig quick_config(double alpha = 0.25) {
  TrainConfig c;
  c.alpha = alpha;
  c.lr = 3e-3;
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = 5;
  c.att_normalize = true;
  return c;
}

TEST(Train, EpochLossDecreases) {
  testing_support::Fixture f(32);
  Transformer<float> m(f.model_config(16, 1, 2), 1);
  const auto res = train(m, f.data, quick_config(), Marking::BA, f.setup.vocab, f.setup.pool, f.setup.tmpl);
  ASSERT_EQ(res.epoch_mean.size(), 2u);
  EXPECT_LT(res.epoch_mean.back(), res.epoch_mean.front());
  EXPECT_EQ(res.steps, 16u);
  EXPECT_EQ(res.trajectory.size(), 16u);
}

TEST(Train, SeedDeterminesResult) {
  testing_support::Fixture f(12);
  auto run = [&](std::uint64_t seed) {
    Transformer<float> m(f.model_config(16, 1, 2), 1);
    auto c = quick_config();
    c.seed = seed;
    train(m, f.data, c, Marking::BAS, f.setup.vocab, f.setup.pool, f.setup.tmpl);
    return m.checksum();
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}

TEST(Train, SingleStepReducesLossOnOneExample) {
  testing_support::Fixture f(2);
  Transformer<double> m(f.model_config(16, 1, 2), 2);
  Rng rng(0);
  const auto asg = assign_identifiers(5, f.setup.pool, AssignMode::Random, rng);
  const auto enc = encode_training_example(f.data[0], {}, asg, f.setup.pool, f.setup.vocab, Marking::BA,
                                           f.setup.tmpl, {});
  std::vector<double> g(m.num_params(), 0.0);
  const double before = example_loss(m, enc, 0.25, AttLoss::Mse, false, std::span<double>(g)).joint;
  auto p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 1e-4 * g[i];
  EXPECT_LT(example_loss(m, enc, 0.25, AttLoss::Mse, false).joint, before);
}

/// Mean identifier logit per label class at every answer position of `data`.
std::array<double, 3> class_means(const Transformer<float>& m, const testing_support::Fixture& f,
                                  const std::vector<Example>& data) {
  std::array<double, 3> sum{}, n{};
  Rng rng(77);
  for (const auto& ex : data) {
    const auto asg = assign_identifiers(ex.context.size(), f.setup.pool, AssignMode::Random, rng);
    const auto enc = encode_training_example(ex, {}, asg, f.setup.pool, f.setup.vocab, Marking::BA, f.setup.tmpl, {});
    const auto logits = m.forward(enc.tokens);
    for (std::size_t j = 0; j < enc.answer_len; ++j) {
      const auto& lab = enc.labels[enc.statement_of[j]];
      for (std::size_t s = 0; s < lab.size(); ++s) {
        const std::size_t c = lab[s] == 4.0 ? 0 : lab[s] == 2.0 ? 1 : 2;
        sum[c] += logits(static_cast<Eigen::Index>(enc.prompt_len - 1 + j), enc.identifier_entries[s]);
        n[c] += 1;
      }
    }
  }
  return {sum[0] / n[0], sum[1] / n[1], sum[2] / n[2]};
}

/// Mean per-position attribution MSE over `data` under fixed assignments.
double attribution_mse(const Transformer<float>& m, const testing_support::Fixture& f, const std::vector<Example>& data) {
  double sum = 0.0;
  std::size_t n = 0;
  Rng rng(78);
  for (const auto& ex : data) {
    const auto asg = assign_identifiers(ex.context.size(), f.setup.pool, AssignMode::Random, rng);
    const auto enc = encode_training_example(ex, {}, asg, f.setup.pool, f.setup.vocab, Marking::BA, f.setup.tmpl, {});
    sum += example_loss(m, enc, 0.0, AttLoss::Mse, true).att;
    ++n;
  }
  return sum / static_cast<double>(n);
}

TEST(Train, AnswerOnlyTrainingLeavesAttributionLossAlone) {
  testing_support::Fixture f(48);
  const std::vector<Example> train_set(f.data.begin(), f.data.begin() + 40), held(f.data.begin() + 40, f.data.end());
  Transformer<float> m(f.model_config(16, 1, 2), 3);
  const double before = attribution_mse(m, f, held);
  auto c = quick_config(0.0);
  c.num_distractors = 0;
  const auto res = train(m, train_set, c, Marking::BA, f.setup.vocab, f.setup.pool, f.setup.tmpl);
  EXPECT_LT(res.trajectory.back().ans, res.trajectory.front().ans);
  EXPECT_NEAR(attribution_mse(m, f, held) / before, 1.0, 0.10);
  const auto means = class_means(m, f, held);
  EXPECT_LT(std::abs(means[0] - means[1]), 1.0);
}

TEST(Train, RejectsUnpaddedAndOverfullContexts) {
  testing_support::Fixture f(4);
  Transformer<float> m(f.model_config(), 1);
  auto data = f.data;
  data[1].context.resize(3);
  data[1].gold[0].cites.clear();
  EXPECT_THROW(train(m, data, quick_config(), Marking::BA, f.setup.vocab, f.setup.pool, f.setup.tmpl), Error);
  auto c = quick_config();
  c.num_distractors = 6;
  EXPECT_THROW(train(m, f.data, c, Marking::BA, f.setup.vocab, f.setup.pool, f.setup.tmpl), Error);
}

TEST(Train, DivergenceIsReported) {
  testing_support::Fixture f(4);
  Transformer<float> m(f.model_config(), 1);
  m.params()[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train(m, f.data, quick_config(), Marking::BA, f.setup.vocab, f.setup.pool, f.setup.tmpl),
               TrainingDiverged);
}

TEST(Train, TrajectoryCsv) {
  std::ostringstream out;
  write_trajectory_csv(out, {{1, 0, 2.5, 10.0, 4.375}});
  EXPECT_EQ(out.str(), "epoch,step,l_ans,l_att,l_aa\n1,0,2.5,10,4.375\n");
}

TEST(Train, ScheduleWarmsUpThenDecays) {
  TrainConfig c;
  c.lr = 1.0;
  c.warmup_frac = 0.1;
  AdamCosine<float> opt(1, c, 100);
  EXPECT_NEAR(opt.rate(0), 0.1, 1e-12);
  EXPECT_NEAR(opt.rate(9), 1.0, 1e-12);
  EXPECT_NEAR(opt.rate(10), 1.0, 1e-12);
  EXPECT_NEAR(opt.rate(55), 0.5, 1e-12);
  EXPECT_LT(opt.rate(99), 0.01);
}

}  // namespace
