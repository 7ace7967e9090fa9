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

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lodit {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace text {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Splits on '.', '!' or '?' followed by whitespace or end of text. The
/// terminator stays with its sentence; surrounding whitespace is dropped.
/// Abbreviations are not special-cased.
inline std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_terminal(s[i])) continue;
    if (i + 1 < s.size() && !is_space(s[i + 1])) continue;
    auto sent = trim(s.substr(start, i + 1 - start));
    if (!sent.empty()) out.emplace_back(sent);
    start = i + 1;
  }
  auto tail = trim(s.substr(start));
  if (!tail.empty()) out.emplace_back(tail);
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Collapses whitespace runs to a single space and trims.
inline std::string squeeze(std::string_view s) { return join(split_words(s), " "); }

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Lowercase, punctuation removed, whitespace collapsed. Used for claim matching.
inline std::string normalize(std::string_view s) {
  std::string buf;
  buf.reserve(s.size());
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'' || c == '-')
      buf += static_cast<char>(std::tolower(u));
    else
      buf += ' ';
  }
  return squeeze(buf);
}

inline bool is_stopword(std::string_view w) {
  static constexpr std::string_view kStop[] = {
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "by",    "for",  "from",
      "has",  "have", "he",   "her",  "his",  "i",    "in",   "is",    "it",   "its",
      "of",   "on",   "or",   "she",  "that", "the",  "their", "them", "they", "this",
      "to",   "was",  "were", "what", "which", "who", "will", "with",  "you",  "your"};
  for (auto s : kStop)
    if (s == w) return true;
  return false;
}

/// Normalized words with stopwords removed, in order of appearance.
inline std::vector<std::string> content_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : split_words(normalize(s)))
    if (!is_stopword(w)) out.push_back(std::move(w));
  return out;
}

}  // namespace text
}  // namespace lodit
