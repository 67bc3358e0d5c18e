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
#include <vector>

#include "streamkv/hashbit.h"
#include "streamkv/matrix.h"

namespace streamkv {

struct ClusterConfig {
  // A token joins a cluster only when its Hamming distance is strictly below th_hp.
  std::uint32_t th_hp = 7;
  std::uint32_t n_hp = 32;
};

// One row of the hash-cluster table.
struct HcEntry {
  std::uint32_t cluster_id = 0;
  std::vector<std::uint32_t> token_ids;  // arrival order
  std::uint32_t token_count = 0;
  std::vector<double> key_cluster;       // running mean of member keys
  std::vector<std::uint64_t> cluster_hashbits;  // signature of key_cluster
};

class HcTable;
struct FrameAssignment;

// Processes the frame's tokens in arrival order. Each token joins the
// nearest cluster (Hamming distance to the representative signature,
// lowest id on ties) when that distance is < th_hp, otherwise it opens a
// new cluster. After a join the mean key and its signature are refreshed.
FrameAssignment assign_frame(HcTable& table, const Matrix& frame_keys, const HashBits& frame_bits,
                             const HyperplaneSet& planes);

// Hash-cluster table of a single (layer, head). Token ids are assigned
// densely from 0 in arrival order.
class HcTable {
 public:
  HcTable(ClusterConfig config, std::size_t dim);

  const ClusterConfig& config() const { return config_; }
  std::size_t dim() const { return dim_; }
  const std::vector<HcEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint32_t next_token_id() const { return next_token_id_; }

  // Packed representative signatures, row k = entries()[k].cluster_hashbits.
  const HashBits& representatives() const { return representatives_; }
  std::vector<std::uint32_t> token_counts() const;

  const HcEntry& entry(std::uint32_t cluster_id) const;

  bool operator==(const HcTable&) const;

 private:
  friend FrameAssignment assign_frame(HcTable&, const Matrix&, const HashBits&, const HyperplaneSet&);

  ClusterConfig config_;
  std::size_t dim_;
  std::vector<HcEntry> entries_;
  HashBits representatives_;
  std::uint32_t next_token_id_ = 0;
};

struct FrameAssignment {
  std::vector<std::uint32_t> token_ids;
  std::vector<std::uint32_t> cluster_ids;  // parallel to token_ids
};

struct ClusterStats {
  std::size_t num_clusters = 0;
  std::size_t total_tokens = 0;
  double mean_tokens_per_cluster = 0.0;
  std::size_t max_tokens_per_cluster = 0;
  std::uint64_t hc_bytes = 0;
  std::uint64_t kv_bytes = 0;
  double hc_overhead_ratio = 0.0;
};

// Serialized size of one HC record: cluster id (u32), token count (u32),
// mean key (dim x f32), packed signature (ceil(n_hp / 8) bytes) and the
// member token ids (u32 each).
std::uint64_t hc_entry_bytes(std::size_t dim, std::size_t n_hp, std::size_t token_count);

// Overhead is measured against the full K+V cache at float32.
ClusterStats cluster_stats(const HcTable& table);

// `layer,head,cluster_id,token_count,token_ids` with '|'-separated ids.
void write_hc_csv_header(std::ostream& os);
void write_hc_csv_rows(std::ostream& os, std::size_t layer, std::size_t head, const HcTable& table);

}  // namespace streamkv
