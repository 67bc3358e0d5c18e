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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "streamkv/hashbit.h"
#include "streamkv/matrix.h"

namespace streamkv {

// Row-stochastic matrix softmax(Q K^T / sqrt(D)), row-max stabilized.
// Stored as doubles, rows = queries, cols = keys.
struct AttentionProbs {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> p;

  double at(std::size_t i, std::size_t j) const { return p[i * cols + j]; }
};

AttentionProbs attention_probabilities(const Matrix& q, const Matrix& k);

// softmax(Q K^T / sqrt(D)) V over every cached key.
Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Same computation restricted to the selected key/value rows.
Matrix light_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                       std::span<const std::uint32_t> selected);

struct QualityReport {
  double attention_mass_recall = 0.0;  // mean over query rows
  double output_cosine = 0.0;          // mean over query rows
  double retrieval_ratio = 0.0;
};

// Scores a token selection against exact attention over the full cache.
QualityReport evaluate_selection(const Matrix& q, const Matrix& k, const Matrix& v,
                                 std::span<const std::uint32_t> selected);

// As above, reusing precomputed exact probabilities and output.
QualityReport evaluate_selection(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionProbs& probs,
                                 const Matrix& exact_out, std::span<const std::uint32_t> selected);

// Pairs of row indices into a stacked key matrix of `frames` x `slots`
// tokens. Half the pairs keep the slot and vary the frame, half are
// uniform over all tokens.
std::vector<std::pair<std::size_t, std::size_t>> sample_token_pairs(std::size_t frames, std::size_t slots,
                                                                    std::size_t count, std::uint64_t seed);

// Pearson r between cosine similarity and Hamming distance over the pairs.
// Throws DegenerateError for < 30 pairs or zero variance.
double hamming_cosine_correlation(const Matrix& keys, const HyperplaneSet& planes,
                                  std::span<const std::pair<std::size_t, std::size_t>> pairs);

double pearson(std::span<const double> x, std::span<const double> y);

// `layer,head,ratio,recall,output_cosine`
void write_quality_csv_header(std::ostream& os);
void write_quality_csv_row(std::ostream& os, std::size_t layer, std::size_t head, const QualityReport& q);

}  // namespace streamkv
