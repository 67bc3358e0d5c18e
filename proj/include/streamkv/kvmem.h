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
#include <deque>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <vector>

namespace streamkv {

enum class Tier : std::uint8_t { kDevice = 0, kHost = 1, kStorage = 2 };

const char* tier_name(Tier t);

struct TierConfig {
  std::uint64_t device_capacity = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t host_capacity = 0;   // 0: no host tier, offload straight to storage
  double link_bandwidth = 4e9;       // bytes/s between device and the next tier
  std::uint64_t transfer_granularity = 4096;

  void validate() const;
};

struct TokenPlacement {
  Tier tier = Tier::kDevice;
  std::uint64_t address = 0;
  std::uint32_t length = 0;
  std::uint32_t frame = 0;
  std::uint32_t cluster = 0;
};

struct FrameRecord {
  std::uint32_t frame = 0;
  Tier tier = Tier::kDevice;
  std::uint64_t base = 0;
  std::uint64_t bytes = 0;
  std::vector<std::uint32_t> token_ids;  // layout order
};

enum class LayoutPolicy {
  kClusterGrouped,  // tokens of a frame grouped by ascending cluster id
  kArrivalOrder,    // tokens stored as they arrive
};

// Token -> (tier, address) map for one (layer, head). Each tier is a bump
// allocator; frame bases are aligned to `alignment` bytes.
class LayoutMap {
 public:
  explicit LayoutMap(std::uint64_t alignment = 4096, LayoutPolicy policy = LayoutPolicy::kClusterGrouped);

  const TokenPlacement& placement(std::uint32_t token_id) const;
  bool contains(std::uint32_t token_id) const { return tokens_.contains(token_id); }
  std::size_t size() const { return tokens_.size(); }
  const std::map<std::uint32_t, TokenPlacement>& tokens() const { return tokens_; }

  // Frames in append order. Each frame lives in exactly one tier.
  const std::deque<FrameRecord>& frames() const { return frames_; }
  std::uint64_t tier_bytes(Tier t) const { return tier_bytes_[static_cast<int>(t)]; }
  LayoutPolicy policy() const { return policy_; }

 private:
  friend void append_frame(LayoutMap&, std::span<const std::uint32_t>, std::span<const std::uint32_t>,
                           std::uint32_t);
  friend std::vector<std::uint32_t> evict_if_needed(LayoutMap&, const TierConfig&);

  std::uint64_t allocate(Tier t, std::uint64_t bytes);
  void move_frame(FrameRecord& f, Tier to);

  std::uint64_t alignment_;
  LayoutPolicy policy_;
  std::map<std::uint32_t, TokenPlacement> tokens_;
  std::deque<FrameRecord> frames_;
  std::uint64_t tier_bytes_[3] = {0, 0, 0};
  std::uint64_t next_address_[3] = {0, 0, 0};
};

// Places a fresh frame on the device tier at contiguous increasing
// addresses. Earlier frames never move.
void append_frame(LayoutMap& layout, std::span<const std::uint32_t> token_ids,
                  std::span<const std::uint32_t> cluster_ids, std::uint32_t bytes_per_token);

// Offloads whole frames, oldest first, until the device fits its capacity.
// Host overflow cascades to storage the same way. Returns offloaded ids.
// Throws CapacityError when the newest frame alone exceeds the device.
std::vector<std::uint32_t> evict_if_needed(LayoutMap& layout, const TierConfig& cfg);

struct FetchRange {
  Tier tier = Tier::kHost;
  std::uint64_t start = 0;
  std::uint64_t length = 0;
  std::uint64_t transactions = 0;
};

struct FetchPlan {
  std::vector<FetchRange> ranges;  // sorted by (tier, start), disjoint
  std::uint64_t transaction_count = 0;
  std::uint64_t bytes_requested = 0;
  std::uint64_t bytes_transferred = 0;
  std::size_t tokens_fetched = 0;

  double transfer_seconds(double link_bandwidth) const {
    return static_cast<double>(bytes_transferred) / link_bandwidth;
  }
};

// Coalesced plan: off-device tokens are widened to granularity-aligned
// windows, and adjacent or overlapping windows merge into one range.
FetchPlan plan_fetch(const LayoutMap& layout, std::span<const std::uint32_t> token_ids, const TierConfig& cfg);

// One aligned window per token, no merging.
FetchPlan plan_fetch_per_token(const LayoutMap& layout, std::span<const std::uint32_t> token_ids,
                               const TierConfig& cfg);

// `token_id,tier,address,frame,cluster`
void write_layout_csv(std::ostream& os, const LayoutMap& layout);
// `tier,start,length,transactions`
void write_fetch_csv(std::ostream& os, const FetchPlan& plan);

}  // namespace streamkv
