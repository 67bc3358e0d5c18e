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
#include <optional>
#include <vector>

#include "streamkv/cluster.h"
#include "streamkv/hashbit.h"
#include "streamkv/kvmem.h"
#include "streamkv/oracle.h"
#include "streamkv/perfsim.h"
#include "streamkv/trace.h"
#include "streamkv/wicsum.h"

namespace streamkv {

struct RetrievalParams {
  std::uint32_t n_hp = 32;
  std::uint64_t hash_seed = 1;
  std::uint32_t th_hp = 7;
  WicsumConfig wicsum;
  bool scaled_scores = false;
  TierConfig tiers;
  // When set, the device holds this many of the newest frames and
  // tiers.device_capacity is derived from the frame size.
  std::optional<std::uint32_t> device_frames = 4;
  std::uint32_t element_bytes = 4;  // stored K+V precision
  std::size_t threads = 0;          // 0: hardware concurrency

  void validate() const;
};

struct FetchTotals {
  std::uint64_t ranges = 0;
  std::uint64_t transactions = 0;
  std::uint64_t bytes_requested = 0;
  std::uint64_t bytes_transferred = 0;

  void add(const FetchPlan& p);
  double amplification() const {
    return bytes_requested > 0 ? static_cast<double>(bytes_transferred) / static_cast<double>(bytes_requested) : 1.0;
  }
};

// One (layer, head) slice. Every frame f >= 1 retrieves for its queries
// from the table built over frames [0, f) and then inserts its own keys.
// Quality and the top-k baseline are measured at the last frame.
struct SliceResult {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::optional<HcTable> table;  // over frames [0, F-1)
  ClusterStats clusters;
  SelectionResult selection;     // last frame, early-exit path
  QualityReport quality;
  std::size_t baseline_k = 0;
  std::size_t baseline_tokens = 0;
  QualityReport baseline_quality;
  // Baseline recall at exactly the selection's union size, linear between
  // the bracketing k (k = 0 counts as no tokens and no recall).
  double baseline_recall_at_budget = 0.0;
  double examined_fraction = 0.0;  // mean over all retrieval rows
  FetchTotals coalesced;           // cluster-grouped layout, merged ranges
  FetchTotals per_token;           // cluster-grouped layout, one window per token
  FetchTotals arrival;             // arrival-order layout, merged ranges
};

struct RetrievalResult {
  TraceDims dims;
  std::vector<SliceResult> slices;  // layer-major

  double mean_ratio() const;
  double mean_recall() const;
  std::vector<double> layer_ratios() const;
  SelectionSummary selection_summary(std::size_t model_layers) const;
  FetchSummary fetch_summary(std::uint64_t granularity) const;
};

// Throws DegenerateError for traces with fewer than two frames.
SliceResult run_slice(const KvTrace& trace, std::size_t layer, std::size_t head, const HyperplaneSet& planes,
                      const RetrievalParams& params);

RetrievalResult run_retrieval(const KvTrace& trace, const RetrievalParams& params);

}  // namespace streamkv
