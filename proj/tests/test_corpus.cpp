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

#include <set>

#include <sstream>

#include "lodit/corpus.hpp"
#include "support.hpp"

namespace {

using namespace lodit;

Example tiny_example() {
  Example ex;
  ex.query = "what is the color of bima?";
  ex.context = {{"d1", "the color of bima is red."}, {"d2", "the city of tulo is oslo."}};
  ex.gold = {{"the color of bima is red.", {"d1"}}};
  return ex;
}

TEST(Corpus, JsonlRoundTrip) {
  auto data = gen_synthetic(testing_support::small_task(20));
  data.push_back(tiny_example());
  const auto path = testing_support::temp_path("roundtrip.jsonl");
  save_dataset(path, data);
  EXPECT_EQ(load_dataset(path), data);
}

TEST(Corpus, JsonFieldOrder) {
  std::ostringstream out;
  write_dataset(out, {tiny_example()});
  EXPECT_EQ(out.str(),
            R"({"query":"what is the color of bima?","docs":[{"id":"d1","text":"the color of bima is red."},)"
            R"({"id":"d2","text":"the city of tulo is oslo."}],"gold":[{"text":"the color of bima is red.",)"
            R"("cites":["d1"]}],"refusal":false})"
            "\n");
}

struct BadLine {
  std::string line;
  std::string needle;
};

class SchemaErrors : public ::testing::TestWithParam<BadLine> {};

TEST_P(SchemaErrors, ReportLineAndField) {
  const std::string good = R"({"query":"q","docs":[{"id":"a","text":"t."}],"gold":[{"text":"g.","cites":["a"]}],"refusal":false})";
  std::istringstream in(good + "\n\n" + GetParam().line + "\n");
  try {
    parse_dataset(in);
    FAIL() << "accepted " << GetParam().line;
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line, 3u);
    EXPECT_NE(std::string(e.what()).find(GetParam().needle), std::string::npos) << e.what();
  }
}

INSTANTIATE_TEST_SUITE_P(
    Corpus, SchemaErrors,
    ::testing::Values(
        BadLine{R"({"query":"q","docs":[{"id":"a","text":"t."}],"gold":[{"text":"g.","cites":["a"]}]})", "refusal"},
        BadLine{R"({"query":1,"docs":[],"gold":[],"refusal":false})", "query"},
        BadLine{R"({"query":"q","docs":[{"id":"a"}],"gold":[],"refusal":false})", "text"},
        BadLine{R"({"query":"q","docs":[{"id":"a","text":"t."}],"gold":[{"text":"g.","cites":["zz"]}],"refusal":false})",
                "absent doc id 'zz'"},
        BadLine{R"({"query":"q","docs":[{"id":"a","text":"t."},{"id":"a","text":"u."}],"gold":[{"text":"g.","cites":[]}],"refusal":false})",
                "duplicate doc id"},
        BadLine{R"({"query":"q","docs":[{"id":"a","text":"x <b> y"}],"gold":[{"text":"g.","cites":[]}],"refusal":false})",
                "delimiter"},
        BadLine{R"({"query":"q","docs":[{"id":"a","text":"t."}],"gold":[{"text":"g.","cites":["a"]}],"refusal":true})",
                "refusal example carries citations"},
        BadLine{R"({"query":"q",)", "malformed JSON"}));

TEST(Corpus, MissingFile) { EXPECT_THROW(load_dataset("/nonexistent/data.jsonl"), Error); }

TEST(Corpus, PaddingKeepsGoldAndReachesMinimum) {
  auto data = gen_synthetic(testing_support::small_task(40));
  for (auto& ex : data)
    std::erase_if(ex.context, [&](const Document& d) { return d.id != ex.gold[0].cites[0]; });
  Rng rng(5);
  const auto padded = pad_dataset(data, 5, rng);
  ASSERT_EQ(padded.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_GE(padded[i].context.size(), 5u);
    EXPECT_EQ(padded[i].gold, data[i].gold);
    for (std::size_t p = 0; p < data[i].context.size(); ++p) EXPECT_EQ(padded[i].context[p], data[i].context[p]);
    EXPECT_NO_THROW(validate(padded[i]));
  }
}

TEST(Corpus, PaddingRejectsShortPool) {
  Rng rng(1);
  EXPECT_THROW(pad_context(tiny_example(), {{"d9", "x."}}, 5, rng), Error);
}

TEST(Corpus, RefusalAugmentationRatio) {
  auto data = gen_synthetic(testing_support::small_task(1000));
  Rng rng(2);
  const auto out = augment_refusals(data, 0.25, document_pool(data), rng, kDefaultRefusal, synthetic_irrelevant);
  EXPECT_NEAR(refusal_fraction(out), 0.25, 0.02);
  for (std::size_t i = data.size(); i < out.size(); ++i) {
    const auto& ex = out[i];
    EXPECT_TRUE(ex.is_refusal);
    ASSERT_EQ(ex.gold.size(), 1u);
    EXPECT_EQ(ex.gold[0].text, kDefaultRefusal);
    EXPECT_TRUE(ex.gold[0].cites.empty());
    const auto key = synthetic_query_key(ex.query);
    for (const auto& d : ex.context) EXPECT_EQ(d.text.find(" " + key + " "), std::string::npos);
  }
}

TEST(Corpus, RefusalCountFormula) {
  EXPECT_EQ(refusals_needed(1000, 0.25), 333u);
  EXPECT_EQ(refusals_needed(3, 0.25), 1u);
  EXPECT_EQ(refusals_needed(10, 0.0), 0u);
}

TEST(Corpus, SyntheticIsReproducible) {
  const auto cfg = testing_support::small_task(50);
  EXPECT_EQ(gen_synthetic(cfg), gen_synthetic(cfg));
  auto other = cfg;
  other.vocab_seed = 8;
  EXPECT_NE(gen_synthetic(cfg), gen_synthetic(other));
  auto resampled = cfg;
  resampled.seed = 2;
  const auto a = gen_synthetic(cfg), b = gen_synthetic(resampled);
  EXPECT_NE(a, b);
  // same word lists, different examples
  std::set<std::string> wa, wb;
  for (const auto& ex : a)
    for (const auto& d : ex.context) wa.insert(text::split_words(d.text).at(3));
  for (const auto& ex : b)
    for (const auto& d : ex.context) wb.insert(text::split_words(d.text).at(3));
  EXPECT_EQ(wa, wb);
}

TEST(Corpus, SyntheticGoldDocStatesTheFact) {
  for (const auto& ex : gen_synthetic(testing_support::small_task(100))) {
    ASSERT_EQ(ex.gold.size(), 1u);
    ASSERT_EQ(ex.gold[0].cites.size(), 1u);
    const auto key = synthetic_query_key(ex.query);
    std::size_t mentions = 0;
    for (const auto& d : ex.context) {
      const bool has = (" " + d.text + " ").find(" " + key + " ") != std::string::npos;
      mentions += has;
      if (d.id == ex.gold[0].cites[0]) { EXPECT_EQ(d.text, ex.gold[0].text); }
    }
    EXPECT_EQ(mentions, 1u);
  }
}

TEST(Corpus, SyntheticGoldPositionIsUniform) {
  auto cfg = testing_support::small_task(1000);
  std::vector<double> counts(cfg.num_docs_per_context, 0.0);
  for (const auto& ex : gen_synthetic(cfg))
    for (std::size_t p = 0; p < ex.context.size(); ++p)
      if (ex.context[p].id == ex.gold[0].cites[0]) counts[p] += 1;
  const double expected = 1000.0 / static_cast<double>(counts.size());
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 13.2767);  // chi-square critical value, 4 dof, p = 0.01
}

TEST(Corpus, SyntheticConfigValidation) {
  SyntheticTaskConfig c;
  c.num_keys = 3;
  EXPECT_THROW(gen_synthetic(c), Error);
  c = {};
  c.distractor_ratio = 1.5;
  EXPECT_THROW(gen_synthetic(c), Error);
}

}  // namespace
