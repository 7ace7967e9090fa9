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

#include <filesystem>
#include <string>
#include <vector>

#include "lodit/lodit.hpp"

namespace testing_support {

inline lodit::SyntheticTaskConfig small_task(std::size_t n) {
  lodit::SyntheticTaskConfig c;
  c.num_examples = n;
  c.num_keys = 24;
  c.num_values = 16;
  return c;
}

/// A synthetic dataset with a short instruction and a vocabulary covering it.
struct Fixture {
  std::vector<lodit::Example> data;
  lodit::PromptSetup setup;

  explicit Fixture(std::size_t n = 12) {
    data = lodit::gen_synthetic(small_task(n));
    setup.tmpl.instruction = "Answer from the documents.";
    setup.vocab = lodit::Vocabulary::build(setup.pool, data, setup.tmpl, setup.refusal);
  }

  lodit::ModelConfig model_config(std::size_t width = 16, std::size_t layers = 1, std::size_t heads = 2) const {
    lodit::ModelConfig c;
    c.width = width;
    c.layers = layers;
    c.heads = heads;
    c.vocab_size = setup.vocab.size();
    return c;
  }
};

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("lodit-test-" + name)).string();
}

}  // namespace testing_support

namespace testing_support {

/// (name, offset) of every parameter tensor in flat-vector order.
inline std::vector<std::pair<std::string, std::size_t>> parameter_groups(const lodit::ModelConfig& cfg) {
  const lodit::ParamLayout lay(cfg);
  std::vector<std::pair<std::string, std::size_t>> g{{"embed", lay.embed}};
  for (std::size_t l = 0; l < lay.layer.size(); ++l) {
    const auto& L = lay.layer[l];
    const auto p = "layer" + std::to_string(l) + ".";
    for (auto [n, o] : std::initializer_list<std::pair<const char*, std::size_t>>{
             {"ln1_g", L.ln1_g}, {"ln1_b", L.ln1_b}, {"wq", L.wq}, {"wk", L.wk}, {"wv", L.wv},
             {"wo", L.wo}, {"bo", L.bo}, {"ln2_g", L.ln2_g}, {"ln2_b", L.ln2_b}, {"w1", L.w1},
             {"b1", L.b1}, {"w2", L.w2}, {"b2", L.b2}})
      g.emplace_back(p + n, o);
    if (cfg.smeared_keys) g.emplace_back(p + "smear", L.smear);
    if (cfg.conv_taps) g.emplace_back(p + "conv", L.conv);
  }
  g.emplace_back("lnf_g", lay.lnf_g);
  g.emplace_back("lnf_b", lay.lnf_b);
  if (!cfg.tie_embeddings) g.emplace_back("wout", lay.wout);
  g.emplace_back("bout", lay.bout);
  return g;
}

}  // namespace testing_support
