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
#include <span>
#include <vector>

#include "streamkv/cluster.h"
#include "streamkv/matrix.h"

namespace streamkv {

// Query-to-cluster relevance, rows = query tokens, cols = clusters.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool scaled = false;  // 1/sqrt(D) applied

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

struct WicsumConfig {
  double th_r_wics = 0.3;
  std::size_t bucket_count = 16;
  // The boundary bucket is re-bucketed until at most this many elements
  // remain, which are then sorted exactly.
  std::size_t refine_limit = 8;
  // Clamp scores at zero before weighting. Disabling it is only supported by
  // select_reference; the bucketed path needs a monotone accumulation.
  bool rectify = true;

  void validate() const;
};

struct RowSelection {
  // Selected cluster ids. The reference emits the sorted prefix; the
  // bucketed path emits whole buckets from the top, then the refined tail.
  std::vector<std::uint32_t> clusters;
  double sum = 0.0;        // total weighted score of the row
  double threshold = 0.0;  // sum * th_r_wics
  double acc = 0.0;        // weighted score of the selected prefix
  bool fallback = false;   // no positive score; best raw score taken
  bool saturated = false;  // accumulation never exceeded the threshold
  double examined_fraction = 1.0;
};

struct SelectionResult {
  std::vector<RowSelection> rows;
  std::vector<std::uint32_t> union_cluster_ids;  // ascending
  std::vector<std::uint32_t> union_token_ids;    // ascending, filled by map_to_tokens
  double retrieval_ratio = 0.0;
};

// Score[i][j] = q_i . key_cluster_j, times 1/sqrt(D) when `scaled`.
// Only representative keys are touched.
ScoreMatrix score_clusters(const Matrix& queries, const HcTable& table, bool scaled = false);

// Weighted cumulative-sum selection, evaluated by a full sort per row:
//   s+   = max(score, 0)
//   Sum  = sum_j s+_j * TC_j
//   Th   = Sum * th_r_wics
//   pick the shortest prefix of clusters ordered by (s+ desc, id asc) whose
//   accumulated s+ * TC strictly exceeds Th.
// Rows without any positive score fall back to the single best raw score.
SelectionResult select_reference(const ScoreMatrix& scores, std::span<const std::uint32_t> token_counts,
                                 const WicsumConfig& cfg);

// Same selection computed by a descending bucket walk that stops at the
// bucket where the threshold is crossed and only sorts inside that bucket.
SelectionResult select_early_exit(const ScoreMatrix& scores, std::span<const std::uint32_t> token_counts,
                                  const WicsumConfig& cfg);

// Fixed-budget baseline: the k best raw scores per row (lowest id on ties).
SelectionResult select_topk_baseline(const ScoreMatrix& scores, std::span<const std::uint32_t> token_counts,
                                     std::size_t k);

// Expands the union of selected clusters into member token ids and sets the
// retrieval ratio against all tokens in the table.
void map_to_tokens(SelectionResult& selection, const HcTable& table);

// Sorted copy of a row's cluster ids, for set comparisons.
std::vector<std::uint32_t> sorted_clusters(const RowSelection& row);

// `layer,head,row,selected_clusters,acc,threshold,ratio`; ratio is the
// per-row token fraction, clusters are '|'-separated.
void write_selection_csv_header(std::ostream& os);
void write_selection_csv_rows(std::ostream& os, std::size_t layer, std::size_t head,
                              const SelectionResult& sel, const HcTable& table);

}  // namespace streamkv
