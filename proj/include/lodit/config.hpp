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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <set>
#include <sstream>
#include <string>

#include "lodit/text.hpp"

namespace lodit {

/// Flat `key = value` configuration file. Unknown keys are reported so that
/// typos do not silently fall back to defaults.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig load(const std::string& path) {
    KeyValueConfig cfg;
    try {
      boost::property_tree::ini_parser::read_ini(path, cfg.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw Error("config: " + std::string(e.what()));
    }
    return cfg;
  }

  static KeyValueConfig parse(const std::string& body) {
    KeyValueConfig cfg;
    std::istringstream in(body);
    try {
      boost::property_tree::ini_parser::read_ini(in, cfg.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw Error("config: " + std::string(e.what()));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return tree_.get_child_optional(key).has_value(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    used_.insert(key);
    auto node = tree_.get_child_optional(key);
    if (!node) return fallback;
    try {
      return node->get_value<T>();
    } catch (const boost::property_tree::ptree_bad_data&) {
      throw Error("config: bad value for '" + key + "': " + node->data());
    }
  }

  /// Keys present in the file that no get() call asked for.
  std::set<std::string> unused() const {
    std::set<std::string> out;
    for (const auto& [k, v] : tree_)
      if (v.empty() && !used_.count(k)) out.insert(k);
    return out;
  }

 private:
  boost::property_tree::ptree tree_;
  mutable std::set<std::string> used_;
};

}  // namespace lodit
