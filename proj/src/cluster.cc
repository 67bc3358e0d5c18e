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

#include "streamkv/cluster.h"

#include <algorithm>
#include <limits>
#include <ostream>
#include <string>

#include "streamkv/errors.h"

namespace streamkv {

HcTable::HcTable(ClusterConfig config, std::size_t dim)
    : config_(config), dim_(dim), representatives_(0, config.n_hp) {
  if (dim == 0) throw ConfigError("cluster table dim must be >= 1");
  if (config.n_hp == 0) throw ConfigError("n_hp must be >= 1");
}

std::vector<std::uint32_t> HcTable::token_counts() const {
  std::vector<std::uint32_t> tc;
  tc.reserve(entries_.size());
  for (const auto& e : entries_) tc.push_back(e.token_count);
  return tc;
}

const HcEntry& HcTable::entry(std::uint32_t cluster_id) const {
  if (cluster_id >= entries_.size()) {
    throw ConsistencyError("unknown cluster id " + std::to_string(cluster_id));
  }
  return entries_[cluster_id];
}

bool HcTable::operator==(const HcTable& o) const {
  if (dim_ != o.dim_ || config_.th_hp != o.config_.th_hp || config_.n_hp != o.config_.n_hp ||
      next_token_id_ != o.next_token_id_ || entries_.size() != o.entries_.size()) {
    return false;
  }
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const auto& a = entries_[k];
    const auto& b = o.entries_[k];
    if (a.cluster_id != b.cluster_id || a.token_ids != b.token_ids || a.token_count != b.token_count ||
        a.key_cluster != b.key_cluster || a.cluster_hashbits != b.cluster_hashbits) {
      return false;
    }
  }
  return representatives_ == o.representatives_;
}

FrameAssignment assign_frame(HcTable& table, const Matrix& frame_keys, const HashBits& frame_bits,
                             const HyperplaneSet& planes) {
  const auto& cfg = table.config_;
  if (frame_bits.n_hp() != cfg.n_hp || planes.n_hp != cfg.n_hp) {
    throw ShapeError("assign_frame: bit width " + std::to_string(frame_bits.n_hp()) +
                     " does not match table n_hp " + std::to_string(cfg.n_hp));
  }
  if (frame_keys.cols() != table.dim_ || planes.dim != table.dim_) {
    throw ShapeError("assign_frame: key dim mismatch");
  }
  if (frame_keys.rows() != frame_bits.rows()) {
    throw ShapeError("assign_frame: keys and bits disagree on token count");
  }

  FrameAssignment out;
  out.token_ids.reserve(frame_keys.rows());
  out.cluster_ids.reserve(frame_keys.rows());

  for (std::size_t t = 0; t < frame_keys.rows(); ++t) {
    const BitRowView bits = frame_bits.row(t);
    const auto key = frame_keys.row(t);

    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    std::uint32_t best_dist = std::numeric_limits<std::uint32_t>::max();
    const auto dists = hamming_row_vs_set(bits, table.representatives_);
    for (std::uint32_t k = 0; k < dists.size(); ++k) {
      if (dists[k] < best_dist) {  // strict: keeps the lowest id on ties
        best_dist = dists[k];
        best = k;
      }
    }

    const std::uint32_t token_id = table.next_token_id_++;
    if (best_dist < cfg.th_hp) {
      HcEntry& e = table.entries_[best];
      const double n = static_cast<double>(e.token_count);
      for (std::size_t d = 0; d < table.dim_; ++d) {
        e.key_cluster[d] += (static_cast<double>(key[d]) - e.key_cluster[d]) / (n + 1.0);
      }
      e.token_ids.push_back(token_id);
      e.token_count += 1;
      e.cluster_hashbits = hash_vector(e.key_cluster, planes);
      table.representatives_.set_row(best, {e.cluster_hashbits, cfg.n_hp});
    } else {
      best = static_cast<std::uint32_t>(table.entries_.size());
      HcEntry e;
      e.cluster_id = best;
      e.token_ids.push_back(token_id);
      e.token_count = 1;
      e.key_cluster.assign(key.begin(), key.end());
      e.cluster_hashbits = hash_vector(e.key_cluster, planes);
      table.representatives_.append_row({e.cluster_hashbits, cfg.n_hp});
      table.entries_.push_back(std::move(e));
    }
    out.token_ids.push_back(token_id);
    out.cluster_ids.push_back(best);
  }
  return out;
}

std::uint64_t hc_entry_bytes(std::size_t dim, std::size_t n_hp, std::size_t token_count) {
  return 4 + 4 + dim * 4 + (n_hp + 7) / 8 + token_count * 4;
}

ClusterStats cluster_stats(const HcTable& table) {
  ClusterStats s;
  if (table.empty()) return s;
  s.num_clusters = table.size();
  for (const auto& e : table.entries()) {
    s.total_tokens += e.token_count;
    s.max_tokens_per_cluster = std::max<std::size_t>(s.max_tokens_per_cluster, e.token_count);
    s.hc_bytes += hc_entry_bytes(table.dim(), table.config().n_hp, e.token_count);
  }
  s.mean_tokens_per_cluster = static_cast<double>(s.total_tokens) / static_cast<double>(s.num_clusters);
  s.kv_bytes = std::uint64_t{s.total_tokens} * 2 * table.dim() * sizeof(float);
  s.hc_overhead_ratio = static_cast<double>(s.hc_bytes) / static_cast<double>(s.kv_bytes);
  return s;
}

void write_hc_csv_header(std::ostream& os) { os << "layer,head,cluster_id,token_count,token_ids\n"; }

void write_hc_csv_rows(std::ostream& os, std::size_t layer, std::size_t head, const HcTable& table) {
  for (const auto& e : table.entries()) {
    os << layer << ',' << head << ',' << e.cluster_id << ',' << e.token_count << ',';
    for (std::size_t i = 0; i < e.token_ids.size(); ++i) {
      if (i) os << '|';
      os << e.token_ids[i];
    }
    os << '\n';
  }
}

}  // namespace streamkv
