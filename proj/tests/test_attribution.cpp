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
#include <random>

#include "lodit/attribution.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using namespace lodit;

Eigen::MatrixXd to_eigen(const oracle::Matrix& m, std::size_t cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t j = 0; j < m.size(); ++j)
    for (std::size_t k = 0; k < cols; ++k) out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = m[j][k];
  return out;
}

std::set<std::size_t> as_set(const Citation& c) { return {c.begin(), c.end()}; }

TEST(Aggregation, WorkedPropExample) {
  Eigen::MatrixXd col(4, 1);
  col << 3.5, 2.9, 4.0, 3.1;
  EXPECT_TRUE(aggregate_prop(col, 3.0, 0.75).empty());
  EXPECT_EQ(aggregate_prop(col, 3.0, 0.5), Citation{0});
  EXPECT_EQ(aggregate_avg(col, 3.0), Citation{0});
  EXPECT_EQ(aggregate_max(col, 3.0), Citation{0});
  EXPECT_TRUE(aggregate_prop(col, 4.0, 0.1).empty());
}

TEST(Aggregation, StrictBoundaries) {
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(3, 2, 3.0);
  EXPECT_TRUE(aggregate_max(flat, 3.0).empty());
  EXPECT_TRUE(aggregate_avg(flat, 3.0).empty());
  EXPECT_TRUE(aggregate_prop(flat, 3.0, 0.5).empty());
  Eigen::MatrixXd one(1, 3);
  one << 2.0, 3.5, 5.0;
  EXPECT_EQ(aggregate_avg(one, 3.0), aggregate_max(one, 3.0));
}

TEST(Aggregation, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> rows(1, 64), cols(1, 10);
  std::uniform_real_distribution<double> phi(-1.0, 6.0), lam(0.01, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = rows(rng), k = cols(rng);
    const double p = phi(rng);
    double l = lam(rng);
    if (trial % 10 == 0) l = static_cast<double>(rng() % n + 1) / static_cast<double>(n);  // exact boundary
    const auto m = oracle::random_matrix(rng, n, k, p);
    const auto e = to_eigen(m, k);
    ASSERT_EQ(as_set(aggregate_prop(e, p, l)), oracle::prop(m, k, p, l)) << "trial " << trial;
    ASSERT_EQ(as_set(aggregate_max(e, p)), oracle::max(m, k, p)) << "trial " << trial;
    ASSERT_EQ(as_set(aggregate_avg(e, p)), oracle::avg(m, k, p)) << "trial " << trial;
  }
}

TEST(Aggregation, RaisingAValueNeverDropsADocument) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t cols = 1 + rng() % 8;
    const auto m = to_eigen(oracle::random_matrix(rng, 1 + rng() % 20, cols, 3.0), cols);
    const auto j = static_cast<Eigen::Index>(rng() % static_cast<std::size_t>(m.rows()));
    const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::size_t>(m.cols()));
    auto up = m;
    up(j, k) += 0.5 + static_cast<double>(rng() % 100) / 20.0;
    for (auto op : {Aggregator::Prop, Aggregator::Max, Aggregator::Avg}) {
      AggregationConfig cfg;
      cfg.op = op;
      const auto before = as_set(aggregate(m, cfg)), after = as_set(aggregate(up, cfg));
      EXPECT_TRUE(std::includes(after.begin(), after.end(), before.begin(), before.end()));
    }
  }
}

TEST(Aggregation, LambdaMonotone) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = to_eigen(oracle::random_matrix(rng, 1 + rng() % 30, 5, 3.0), 5);
    std::set<std::size_t> prev = as_set(aggregate_prop(m, 3.0, 0.05));
    for (double l = 0.1; l <= 1.0; l += 0.05) {
      const auto cur = as_set(aggregate_prop(m, 3.0, l));
      EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      prev = cur;
    }
  }
}

TEST(Aggregation, ColumnPermutationEquivariance) {
  std::mt19937_64 rng(7);
  std::vector<std::size_t> perm(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = to_eigen(oracle::random_matrix(rng, 1 + rng() % 16, 6, 3.0), 6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd moved(m.rows(), m.cols());
    for (std::size_t k = 0; k < perm.size(); ++k) moved.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(perm[k]));
    for (auto op : {Aggregator::Prop, Aggregator::Max, Aggregator::Avg}) {
      AggregationConfig cfg;
      cfg.op = op;
      std::set<std::size_t> want;
      for (auto c : aggregate(m, cfg))
        for (std::size_t k = 0; k < perm.size(); ++k)
          if (perm[k] == c) want.insert(k);
      EXPECT_EQ(as_set(aggregate(moved, cfg)), want);
    }
  }
}

TEST(Aggregation, ConfigValidation) {
  AggregationConfig c;
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.lambda = 0.5;
  c.phi_prop = std::numeric_limits<double>::infinity();
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_aggregator("avg"), Aggregator::Avg);
  EXPECT_THROW(parse_aggregator("median"), Error);
}

TEST(Segment, SentencesAndFallback) {
  testing_support::Fixture f;
  const auto& v = f.setup.vocab;
  auto st = segment_statements(tokenize("the color of. the city of.", v), v);
  ASSERT_EQ(st.size(), 2u);
  EXPECT_EQ(st[0].text, "the color of.");
  EXPECT_EQ(st[1].begin, st[0].end);
  EXPECT_EQ(st[1].end, 8u);
  st = segment_statements(tokenize("the color of", v), v);
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].size(), 3u);
  EXPECT_TRUE(segment_statements({}, v).empty());
}

AttributedStatement stmt(const std::string& text, Citation c) { return {{0, 0, 1, text}, std::move(c)}; }

TEST(Render, BracketsAscendingOneBased) {
  EXPECT_EQ(render_attributed_answer({stmt("A.", {1}), stmt("B.", {2, 0}), stmt("C.", {})}), "A. [2] B. [1][3] C.");
}

TEST(Failsafe, AllEmptyBecomesRefusal) {
  AttributedAnswer a;
  a.statements = {stmt("A.", {}), stmt("B.", {})};
  const auto r = failsafe(a, kDefaultRefusal);
  EXPECT_TRUE(r.refused);
  EXPECT_EQ(r.rendered, kDefaultRefusal);
  ASSERT_EQ(r.statements.size(), 1u);
  EXPECT_TRUE(r.statements[0].cites.empty());
  a.statements[1].cites = {3};
  EXPECT_FALSE(failsafe(a).refused);
}

TEST(Failsafe, SubThresholdContributionsYieldVerbatimRefusal) {
  const std::vector<Statement> st{{0, 0, 3, "the color of bima is red."}};
  ContributionMatrix m{0, Eigen::MatrixXd::Constant(3, 5, 2.9), ContributionSource::Finetuned};
  const auto a = attribute(st, {m}, AggregationConfig{});
  EXPECT_TRUE(a.refused);
  EXPECT_EQ(a.rendered, std::string(kDefaultRefusal));
  EXPECT_EQ(to_json("q", a)["statements"][0]["cites"].size(), 0u);
}

TEST(Attribute, GeneratedRefusalSentenceIsARefusal) {
  const std::vector<Statement> st{{0, 0, 2, "I apologize, but I couldn't find an answer to your question in the search results."}};
  ContributionMatrix m{0, Eigen::MatrixXd::Constant(2, 5, 9.0), ContributionSource::Finetuned};
  const auto a = attribute(st, {m}, AggregationConfig{});
  EXPECT_TRUE(a.refused);
  EXPECT_TRUE(a.statements[0].cites.empty());
}

TEST(Attribute, JsonUsesOneBasedCites) {
  const std::vector<Statement> st{{0, 0, 2, "A."}, {1, 2, 4, "B."}};
  Eigen::MatrixXd a(2, 3), b(2, 3);
  a << 5, 0, 5, 5, 0, 5;
  b << 0, 5, 0, 0, 5, 0;
  const auto ans = attribute(st, {{0, a, ContributionSource::Finetuned}, {1, b, ContributionSource::Finetuned}}, {});
  EXPECT_EQ(to_json("q", ans).dump(),
            R"({"query":"q","answer":"A. [1][3] B. [2]","statements":[{"text":"A.","cites":[1,3]},{"text":"B.","cites":[2]}],"refused":false})");
  EXPECT_THROW(attribute(st, {{0, a, ContributionSource::Finetuned}}, {}), Error);
}

}  // namespace
