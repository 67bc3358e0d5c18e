// Copyright 2026 The StreamKV Authors
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

#include "streamkv/oracle.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "streamkv/csv.h"
#include "streamkv/errors.h"

namespace streamkv {
namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols()) throw ShapeError("attention: query and key dims differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: key and value row counts differ");
  if (k.rows() == 0) throw ShapeError("attention: no keys");
}

Matrix weighted_values(const AttentionProbs& probs, const Matrix& v) {
  Matrix out(probs.rows, v.cols());
  std::vector<double> acc(v.cols());
  for (std::size_t i = 0; i < probs.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < probs.cols; ++j) {
      const double w = probs.at(i, j);
      auto vr = v.row(j);
      for (std::size_t d = 0; d < v.cols(); ++d) acc[d] += w * vr[d];
    }
    for (std::size_t d = 0; d < v.cols(); ++d) out(i, d) = static_cast<float>(acc[d]);
  }
  return out;
}

}  // namespace

AttentionProbs attention_probabilities(const Matrix& q, const Matrix& k) {
  if (q.cols() != k.cols()) throw ShapeError("attention: query and key dims differ");
  AttentionProbs a{q.rows(), k.rows(), std::vector<double>(q.rows() * k.rows())};
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double* row = a.p.data() + i * a.cols;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      row[j] = dot(q.row(i), k.row(j)) * scale;
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < k.rows(); ++j) row[j] /= z;
  }
  return a;
}

Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  check_qkv(q, k, v);
  return weighted_values(attention_probabilities(q, k), v);
}

Matrix light_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                       std::span<const std::uint32_t> selected) {
  check_qkv(q, k, v);
  if (selected.empty()) throw DegenerateError("light_attention: empty selection");
  std::vector<std::size_t> idx(selected.begin(), selected.end());
  return exact_attention(q, k.gather_rows(idx), v.gather_rows(idx));
}

QualityReport evaluate_selection(const Matrix& q, const Matrix& k, const Matrix& v,
                                 std::span<const std::uint32_t> selected) {
  check_qkv(q, k, v);
  const AttentionProbs probs = attention_probabilities(q, k);
  const Matrix exact = weighted_values(probs, v);
  return evaluate_selection(q, k, v, probs, exact, selected);
}

QualityReport evaluate_selection(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionProbs& probs,
                                 const Matrix& exact_out, std::span<const std::uint32_t> selected) {
  const Matrix light = light_attention(q, k, v, selected);
  QualityReport r;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double mass = 0.0;
    for (std::uint32_t j : selected) mass += probs.at(i, j);
    r.attention_mass_recall += std::min(mass, 1.0);
    r.output_cosine += cosine_similarity(exact_out.row(i), light.row(i));
  }
  const double n = static_cast<double>(q.rows());
  r.attention_mass_recall /= n;
  r.output_cosine /= n;
  r.retrieval_ratio = static_cast<double>(selected.size()) / static_cast<double>(k.rows());
  return r;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_token_pairs(std::size_t frames, std::size_t slots,
                                                                    std::size_t count, std::uint64_t seed) {
  if (frames * slots < 2) throw DegenerateError("need at least two tokens to sample pairs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_frame(0, frames - 1);
  std::uniform_int_distribution<std::size_t> pick_slot(0, slots - 1);
  std::uniform_int_distribution<std::size_t> pick_token(0, frames * slots - 1);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(count);
  while (pairs.size() < count) {
    std::size_t a;
    std::size_t b;
    if (frames > 1 && pairs.size() % 2 == 0) {
      const std::size_t s = pick_slot(rng);
      const std::size_t f1 = pick_frame(rng);
      std::size_t f2 = pick_frame(rng);
      if (f1 == f2) continue;
      a = f1 * slots + s;
      b = f2 * slots + s;
    } else {
      a = pick_token(rng);
      b = pick_token(rng);
      if (a == b) continue;
    }
    pairs.emplace_back(a, b);
  }
  return pairs;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw ShapeError("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 1e-12 * n || syy <= 1e-12 * n) throw DegenerateError("correlation undefined: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double hamming_cosine_correlation(const Matrix& keys, const HyperplaneSet& planes,
                                  std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (pairs.size() < 30) throw DegenerateError("correlation needs at least 30 pairs");
  const HashBits bits = generate_hashbits(keys, planes);
  std::vector<double> cos;
  std::vector<double> ham;
  cos.reserve(pairs.size());
  ham.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    cos.push_back(cosine_similarity(keys.row(a), keys.row(b)));
    ham.push_back(static_cast<double>(hamming(bits.row(a), bits.row(b))));
  }
  return pearson(cos, ham);
}

void write_quality_csv_header(std::ostream& os) { os << "layer,head,ratio,recall,output_cosine\n"; }

void write_quality_csv_row(std::ostream& os, std::size_t layer, std::size_t head, const QualityReport& q) {
  os << layer << ',' << head << ',' << fmt_double(q.retrieval_ratio) << ',' << fmt_double(q.attention_mass_recall)
     << ',' << fmt_double(q.output_cosine) << '\n';
}

}  // namespace streamkv
