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

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gtest/gtest.h"
#include "oracles.h"
#include "streamkv/errors.h"
#include "streamkv/trace.h"

namespace streamkv {
namespace {

Matrix to_matrix(const oracle::Grid& g) {
  Matrix m(g.size(), g[0].size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[0].size(); ++j) m(i, j) = static_cast<float>(g[i][j]);
  return m;
}

oracle::Grid to_grid(const Matrix& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

std::vector<std::uint32_t> all_ids(std::size_t n) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), 0u);
  return v;
}

TEST(OracleTest, SingleKeyReturnsItsValue) {
  Matrix q(2, 3, 0.5f);
  Matrix k(1, 3, -1.0f);
  Matrix v(1, 2);
  v(0, 0) = 3.0f;
  v(0, 1) = -7.0f;
  const Matrix out = exact_attention(q, k, v);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_FLOAT_EQ(out(i, 0), 3.0f);
    EXPECT_FLOAT_EQ(out(i, 1), -7.0f);
  }
}

TEST(OracleTest, IdenticalKeysAverageValues) {
  Matrix q(1, 4, 1.0f);
  Matrix k(3, 4, 0.25f);
  Matrix v(3, 1);
  v(0, 0) = 1.0f;
  v(1, 0) = 2.0f;
  v(2, 0) = 6.0f;
  EXPECT_NEAR(exact_attention(q, k, v)(0, 0), 3.0, 1e-6);
}

TEST(OracleTest, HandComputedThreeByFour) {
  // Q 3x2, K 4x2, V 4x2 against the scalar oracle.
  const oracle::Grid q = {{1, 0}, {0, 2}, {-1, 1}};
  const oracle::Grid k = {{1, 1}, {0, -1}, {2, 0}, {-1, 3}};
  const oracle::Grid v = {{1, 2}, {3, -1}, {0, 0}, {5, 5}};
  const auto expect = oracle::masked_attention(q, k, v, std::vector<bool>(4, true));
  const Matrix got = exact_attention(to_matrix(q), to_matrix(k), to_matrix(v));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(got(i, d), expect[i][d], 1e-6);
}

TEST(OracleTest, LightAttentionOverEverythingIsExact) {
  std::mt19937_64 rng(1);
  const Matrix q = to_matrix(oracle::random_grid(5, 8, rng));
  const Matrix k = to_matrix(oracle::random_grid(12, 8, rng));
  const Matrix v = to_matrix(oracle::random_grid(12, 3, rng));
  EXPECT_EQ(light_attention(q, k, v, all_ids(12)), exact_attention(q, k, v));
  const QualityReport r = evaluate_selection(q, k, v, all_ids(12));
  EXPECT_NEAR(r.attention_mass_recall, 1.0, 1e-12);
  EXPECT_NEAR(r.output_cosine, 1.0, 1e-6);
  EXPECT_EQ(r.retrieval_ratio, 1.0);
}

TEST(OracleTest, LightAttentionMatchesMaskedOracle) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution keep(0.4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto q = oracle::random_grid(4, 16, rng);
    const auto k = oracle::random_grid(40, 16, rng);
    const auto v = oracle::random_grid(40, 6, rng);
    std::vector<bool> mask(40);
    std::vector<std::uint32_t> sel;
    for (std::uint32_t j = 0; j < 40; ++j) {
      mask[j] = keep(rng) || j == 0;
      if (mask[j]) sel.push_back(j);
    }
    const auto expect = oracle::masked_attention(q, k, v, mask);
    const Matrix got = light_attention(to_matrix(q), to_matrix(k), to_matrix(v), sel);
    const auto exact = to_grid(exact_attention(to_matrix(q), to_matrix(k), to_matrix(v)));
    const QualityReport r = evaluate_selection(to_matrix(q), to_matrix(k), to_matrix(v), sel);
    double cos = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(got(i, d), expect[i][d], 1e-6);
      cos += oracle::cosine(exact[i], to_grid(got)[i]);
    }
    EXPECT_NEAR(r.output_cosine, cos / 4, 1e-6);
  }
}

TEST(OracleTest, DominantKeyApproachesItsValue) {
  Matrix q(1, 2);
  q(0, 0) = 1.0f;
  Matrix k(3, 2);
  k(0, 0) = 1.0f;
  k(1, 1) = 1.0f;
  k(2, 0) = -1.0f;
  Matrix v(3, 1);
  v(0, 0) = 10.0f;
  double prev_gap = 1e9;
  for (float scale : {1.0f, 10.0f, 100.0f, 1000.0f}) {
    Matrix ks = k;
    for (float& x : ks.data()) x *= scale;
    const double gap = std::abs(exact_attention(q, ks, v)(0, 0) - 10.0);
    EXPECT_LE(gap, prev_gap);
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 1e-4);
}

TEST(OracleTest, EmptySelectionIsDegenerate) {
  Matrix m(1, 2, 1.0f);
  EXPECT_THROW(light_attention(m, m, m, std::vector<std::uint32_t>{}), DegenerateError);
  EXPECT_THROW(exact_attention(m, Matrix(1, 3), m), ShapeError);
  EXPECT_THROW(exact_attention(m, Matrix(0, 2), Matrix(0, 2)), ShapeError);
}

TEST(OracleTest, RecallGrowsWithSelection) {
  std::mt19937_64 rng(3);
  const Matrix q = to_matrix(oracle::random_grid(6, 8, rng));
  const Matrix k = to_matrix(oracle::random_grid(30, 8, rng));
  const Matrix v = to_matrix(oracle::random_grid(30, 4, rng));
  double prev = 0.0;
  std::vector<std::uint32_t> sel;
  for (std::uint32_t j = 0; j < 30; ++j) {
    sel.push_back(j);
    const double r = evaluate_selection(q, k, v, sel).attention_mass_recall;
    EXPECT_GE(r, prev);
    EXPECT_LE(r, 1.0);
    prev = r;
  }
  EXPECT_NEAR(prev, 1.0, 1e-12);
}

TEST(OracleTest, ProbabilityRowsSumToOne) {
  std::mt19937_64 rng(4);
  Matrix q = to_matrix(oracle::random_grid(5, 8, rng));
  for (float& x : q.row(0)) x *= 1000.0f;  // large logits stay finite
  const Matrix k = to_matrix(oracle::random_grid(20, 8, rng));
  const AttentionProbs p = attention_probabilities(q, k);
  for (std::size_t i = 0; i < p.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.cols; ++j) {
      EXPECT_TRUE(std::isfinite(p.at(i, j)));
      s += p.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(OracleTest, CorrelationNeedsVarianceAndEnoughPairs) {
  Matrix keys(40, 4, 1.0f);
  const auto planes = make_hyperplanes(4, 32, 1);
  const auto pairs = sample_token_pairs(4, 10, 100, 9);
  EXPECT_THROW(hamming_cosine_correlation(keys, planes, pairs), DegenerateError);
  const std::vector<std::pair<std::size_t, std::size_t>> few(10, {0, 1});
  EXPECT_THROW(hamming_cosine_correlation(keys, planes, few), DegenerateError);
  EXPECT_THROW(sample_token_pairs(1, 1, 10, 0), DegenerateError);
}

TEST(OracleTest, AntipodalAndIdenticalPairs) {
  // Rows alternate v, -v, v: distances are 0 at cosine 1 and n_hp at cosine -1.
  std::mt19937_64 rng(5);
  const auto base = oracle::random_grid(20, 16, rng);
  Matrix keys(40, 16);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t d = 0; d < 16; ++d) {
      keys(2 * i, d) = static_cast<float>(base[i][d]);
      keys(2 * i + 1, d) = static_cast<float>(i % 2 ? -base[i][d] : base[i][d]);
    }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < 20; ++i) pairs.emplace_back(2 * i, 2 * i + 1);
  for (std::size_t i = 0; i < 20; ++i) pairs.emplace_back(2 * i + 1, 2 * i);
  EXPECT_NEAR(hamming_cosine_correlation(keys, make_hyperplanes(16, 32, 3), pairs), -1.0, 1e-9);
}

TEST(OracleTest, SyntheticTraceShowsStrongNegativeCorrelation) {
  const KvTrace t = generate_synthetic_trace({TraceDims{1, 1, 64, 32, 16}, 0.9, 8});
  const Matrix keys = t.stacked_keys(0, 0, 0, 16);
  const auto pairs = sample_token_pairs(16, 32, 1000, 77);
  const double r = hamming_cosine_correlation(keys, make_hyperplanes(64, 32, 1), pairs);
  EXPECT_LT(r, 0.0);
  EXPECT_GE(std::abs(r), 0.7);
}

TEST(OracleTest, PairSamplerIsDeterministicAndInRange) {
  const auto a = sample_token_pairs(8, 5, 200, 1);
  EXPECT_EQ(a, sample_token_pairs(8, 5, 200, 1));
  std::size_t same_slot = 0;
  for (const auto& [x, y] : a) {
    EXPECT_LT(x, 40u);
    EXPECT_LT(y, 40u);
    EXPECT_NE(x, y);
    if (x % 5 == y % 5) ++same_slot;
  }
  EXPECT_GE(same_slot, 100u);
}

TEST(OracleTest, PearsonBasics) {
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> y = {8, 6, 4, 2};
  EXPECT_NEAR(pearson(x, y), -1.0, 1e-12);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), ShapeError);
}

TEST(OracleTest, QualityCsv) {
  std::ostringstream os;
  write_quality_csv_header(os);
  write_quality_csv_row(os, 1, 0, QualityReport{0.5, 0.25, 0.125});
  EXPECT_EQ(os.str(), "layer,head,ratio,recall,output_cosine\n1,0,0.125,0.5,0.25\n");
}

}  // namespace
}  // namespace streamkv
