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

#include "streamkv/kvmem.h"

#include <algorithm>
#include <bit>
#include <ostream>
#include <string>

#include "streamkv/errors.h"

namespace streamkv {
namespace {

std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }
std::uint64_t align_down(std::uint64_t v, std::uint64_t a) { return v / a * a; }

struct Window {
  Tier tier;
  std::uint64_t start;
  std::uint64_t end;
};

std::vector<std::uint32_t> unique_sorted(std::span<const std::uint32_t> ids) {
  std::vector<std::uint32_t> v(ids.begin(), ids.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Off-device windows for the request plus the requested byte count.
std::vector<Window> collect_windows(const LayoutMap& layout, std::span<const std::uint32_t> token_ids,
                                    const TierConfig& cfg, FetchPlan& plan) {
  cfg.validate();
  const std::uint64_t g = cfg.transfer_granularity;
  std::vector<Window> windows;
  for (std::uint32_t id : unique_sorted(token_ids)) {
    const TokenPlacement& p = layout.placement(id);
    if (p.tier == Tier::kDevice) continue;
    windows.push_back({p.tier, align_down(p.address, g), align_up(p.address + p.length, g)});
    plan.bytes_requested += p.length;
    ++plan.tokens_fetched;
  }
  std::sort(windows.begin(), windows.end(), [](const Window& a, const Window& b) {
    if (a.tier != b.tier) return a.tier < b.tier;
    return a.start < b.start;
  });
  return windows;
}

void push_range(FetchPlan& plan, Tier tier, std::uint64_t start, std::uint64_t end, std::uint64_t g) {
  FetchRange r{tier, start, end - start, (end - start + g - 1) / g};
  plan.transaction_count += r.transactions;
  plan.bytes_transferred += r.length;
  plan.ranges.push_back(r);
}

}  // namespace

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::kDevice:
      return "device";
    case Tier::kHost:
      return "host";
    case Tier::kStorage:
      return "storage";
  }
  return "?";
}

void TierConfig::validate() const {
  if (transfer_granularity == 0 || !std::has_single_bit(transfer_granularity)) {
    throw ConfigError("transfer_granularity must be a power of two");
  }
  if (!(link_bandwidth > 0.0)) throw ConfigError("link_bandwidth must be positive");
}

LayoutMap::LayoutMap(std::uint64_t alignment, LayoutPolicy policy) : alignment_(alignment), policy_(policy) {
  if (alignment == 0) throw ConfigError("layout alignment must be >= 1");
}

const TokenPlacement& LayoutMap::placement(std::uint32_t token_id) const {
  auto it = tokens_.find(token_id);
  if (it == tokens_.end()) throw ConsistencyError("token " + std::to_string(token_id) + " is not mapped");
  return it->second;
}

std::uint64_t LayoutMap::allocate(Tier t, std::uint64_t bytes) {
  auto& next = next_address_[static_cast<int>(t)];
  const std::uint64_t base = align_up(next, alignment_);
  next = base + bytes;
  tier_bytes_[static_cast<int>(t)] += bytes;
  return base;
}

void LayoutMap::move_frame(FrameRecord& f, Tier to) {
  const std::uint64_t new_base = allocate(to, f.bytes);
  tier_bytes_[static_cast<int>(f.tier)] -= f.bytes;
  for (std::uint32_t id : f.token_ids) {
    TokenPlacement& p = tokens_.at(id);
    p.address = new_base + (p.address - f.base);
    p.tier = to;
  }
  f.base = new_base;
  f.tier = to;
}

void append_frame(LayoutMap& layout, std::span<const std::uint32_t> token_ids,
                  std::span<const std::uint32_t> cluster_ids, std::uint32_t bytes_per_token) {
  if (token_ids.size() != cluster_ids.size()) throw ShapeError("append_frame: ids and clusters differ in length");
  if (bytes_per_token == 0) throw ConfigError("bytes_per_token must be >= 1");
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (layout.contains(token_ids[i]) ||
        std::find(token_ids.begin(), token_ids.begin() + static_cast<std::ptrdiff_t>(i), token_ids[i]) !=
            token_ids.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ConsistencyError("append_frame: token " + std::to_string(token_ids[i]) + " already mapped");
    }
  }

  std::vector<std::size_t> order(token_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (layout.policy_ == LayoutPolicy::kClusterGrouped) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cluster_ids[a] < cluster_ids[b]; });
  }

  FrameRecord rec;
  rec.frame = layout.frames_.empty() ? 0 : layout.frames_.back().frame + 1;
  rec.tier = Tier::kDevice;
  rec.bytes = std::uint64_t{bytes_per_token} * token_ids.size();
  rec.base = layout.allocate(Tier::kDevice, rec.bytes);
  std::uint64_t addr = rec.base;
  for (std::size_t i : order) {
    layout.tokens_[token_ids[i]] = {Tier::kDevice, addr, bytes_per_token, rec.frame, cluster_ids[i]};
    rec.token_ids.push_back(token_ids[i]);
    addr += bytes_per_token;
  }
  layout.frames_.push_back(std::move(rec));
}

std::vector<std::uint32_t> evict_if_needed(LayoutMap& layout, const TierConfig& cfg) {
  cfg.validate();
  if (!layout.frames_.empty()) {
    const FrameRecord& f = layout.frames_.back();
    if (f.tier == Tier::kDevice && f.bytes > cfg.device_capacity) {
      throw CapacityError("frame " + std::to_string(f.frame) + " (" + std::to_string(f.bytes) +
                          " bytes) exceeds device capacity " + std::to_string(cfg.device_capacity));
    }
  }
  std::vector<std::uint32_t> offloaded;
  const Tier next = cfg.host_capacity > 0 ? Tier::kHost : Tier::kStorage;
  // Frames leave the device in append order, so resident frames form a suffix.
  for (auto& f : layout.frames_) {
    if (layout.tier_bytes(Tier::kDevice) <= cfg.device_capacity) break;
    if (f.tier != Tier::kDevice) continue;
    layout.move_frame(f, next);
    offloaded.insert(offloaded.end(), f.token_ids.begin(), f.token_ids.end());
  }
  if (next == Tier::kHost) {
    for (auto& f : layout.frames_) {
      if (layout.tier_bytes(Tier::kHost) <= cfg.host_capacity) break;
      if (f.tier == Tier::kHost) layout.move_frame(f, Tier::kStorage);
    }
  }
  return offloaded;
}

FetchPlan plan_fetch(const LayoutMap& layout, std::span<const std::uint32_t> token_ids, const TierConfig& cfg) {
  FetchPlan plan;
  const auto windows = collect_windows(layout, token_ids, cfg, plan);
  const std::uint64_t g = cfg.transfer_granularity;
  std::size_t i = 0;
  while (i < windows.size()) {
    Tier tier = windows[i].tier;
    std::uint64_t start = windows[i].start;
    std::uint64_t end = windows[i].end;
    std::size_t j = i + 1;
    while (j < windows.size() && windows[j].tier == tier && windows[j].start <= end) {
      end = std::max(end, windows[j].end);
      ++j;
    }
    push_range(plan, tier, start, end, g);
    i = j;
  }
  return plan;
}

FetchPlan plan_fetch_per_token(const LayoutMap& layout, std::span<const std::uint32_t> token_ids,
                               const TierConfig& cfg) {
  FetchPlan plan;
  const auto windows = collect_windows(layout, token_ids, cfg, plan);
  for (const auto& w : windows) push_range(plan, w.tier, w.start, w.end, cfg.transfer_granularity);
  return plan;
}

void write_layout_csv(std::ostream& os, const LayoutMap& layout) {
  os << "token_id,tier,address,frame,cluster\n";
  for (const auto& [id, p] : layout.tokens()) {
    os << id << ',' << tier_name(p.tier) << ',' << p.address << ',' << p.frame << ',' << p.cluster << '\n';
  }
}

void write_fetch_csv(std::ostream& os, const FetchPlan& plan) {
  os << "tier,start,length,transactions\n";
  for (const auto& r : plan.ranges) {
    os << tier_name(r.tier) << ',' << r.start << ',' << r.length << ',' << r.transactions << '\n';
  }
}

}  // namespace streamkv
