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

#include <string>
#include <vector>

#include "lodit/vocab.hpp"

namespace lodit {

/// One sentence of a generated answer: tokens [begin, end).
struct Statement {
  std::size_t index = 0;
  std::size_t begin = 0, end = 0;
  std::string text;

  std::size_t size() const { return end - begin; }
};

/// Sentence segmentation over answer tokens, using the same terminators as
/// document sentence splitting. Trailing tokens after the last terminator
/// form a final statement.
inline std::vector<Statement> segment_statements(const Tokens& answer, const Vocabulary& vocab) {
  std::vector<Statement> out;
  std::size_t start = 0;
  auto close = [&](std::size_t end) {
    Tokens span(answer.begin() + static_cast<std::ptrdiff_t>(start), answer.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back({out.size(), start, end, detokenize(span, vocab)});
    start = end;
  };
  for (std::size_t i = 0; i < answer.size(); ++i) {
    const auto& e = vocab[answer[i]];
    if (e.size() == 1 && text::is_terminal(e[0])) close(i + 1);
  }
  if (start < answer.size()) close(answer.size());
  return out;
}

}  // namespace lodit
