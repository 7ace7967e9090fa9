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

// Independent reference implementations used only by tests. They take plain
// nested vectors and loop naively so they share no code path with the
// library.

#pragma once

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;  // [token][doc]

inline std::set<std::size_t> prop(const Matrix& m, std::size_t docs, double phi, double lambda) {
  std::set<std::size_t> out;
  for (std::size_t k = 0; k < docs; ++k) {
    int count = 0;
    for (const auto& row : m)
      if (row[k] > phi) count += 1;
    if (count > lambda * static_cast<double>(m.size())) out.insert(k);
  }
  return out;
}

inline std::set<std::size_t> max(const Matrix& m, std::size_t docs, double phi) {
  std::set<std::size_t> out;
  for (std::size_t k = 0; k < docs; ++k) {
    bool any = false;
    for (const auto& row : m) any = any || row[k] > phi;
    if (any) out.insert(k);
  }
  return out;
}

inline std::set<std::size_t> avg(const Matrix& m, std::size_t docs, double phi) {
  std::set<std::size_t> out;
  for (std::size_t k = 0; k < docs; ++k) {
    long double s = 0;
    for (const auto& row : m) s += row[k];
    if (m.size() && static_cast<double>(s / static_cast<long double>(m.size())) > phi) out.insert(k);
  }
  return out;
}

/// Softmax in long double without max subtraction beyond what exp range allows.
inline std::vector<long double> softmax_ld(const std::vector<long double>& l) {
  long double m = l[0];
  for (auto v : l) m = v > m ? v : m;
  long double z = 0;
  std::vector<long double> p;
  for (auto v : l) z += std::exp(v - m);
  for (auto v : l) p.push_back(std::exp(v - m) / z);
  return p;
}

inline long double kl(const std::vector<long double>& t, const std::vector<long double>& m) {
  long double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > 0) s += t[i] * std::log(t[i] / m[i]);
  return s;
}

/// Random matrix whose entries cluster around `center` so thresholds bite,
/// with a share of exact ties at `center`.
inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double center) {
  std::normal_distribution<double> nd(center, 1.5);
  std::bernoulli_distribution tie(0.1);
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& v : r) v = tie(rng) ? center : nd(rng);
  return m;
}

/// Central finite differences of `loss` at every parameter, compared with
/// `analytic` as ||fd - g|| / (||fd|| + ||g||) over consecutive groups.
struct GroupError {
  std::string name;
  double error = 0.0;
};

template <typename Params, typename Loss>
std::vector<GroupError> gradient_errors(Params params, const std::vector<double>& analytic, Loss loss,
                                        const std::vector<std::pair<std::string, std::size_t>>& groups,
                                        double h = 1e-5) {
  std::vector<double> fd(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double old = params[i];
    params[i] = old + h;
    const double up = loss();
    params[i] = old - h;
    const double down = loss();
    params[i] = old;
    fd[i] = (up - down) / (2.0 * h);
  }
  std::vector<GroupError> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t begin = groups[g].second;
    const std::size_t end = g + 1 < groups.size() ? groups[g + 1].second : params.size();
    double diff = 0, a = 0, b = 0;
    for (std::size_t i = begin; i < end; ++i) {
      diff += (fd[i] - analytic[i]) * (fd[i] - analytic[i]);
      a += fd[i] * fd[i];
      b += analytic[i] * analytic[i];
    }
    const double den = std::sqrt(a) + std::sqrt(b);
    out.push_back({groups[g].first, den > 0 ? std::sqrt(diff) / den : 0.0});
  }
  return out;
}

}  // namespace oracle
