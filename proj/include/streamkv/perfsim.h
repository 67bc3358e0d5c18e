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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace streamkv {

struct PowerConfig {
  // Per-core unit power at 0.8 V / 800 MHz; the five terms sum to 2.61 W.
  double dpe_watts = 1.90;
  double vpe_watts = 0.40;
  double hcu_watts = 0.030;
  double wtu_watts = 0.033;
  double static_watts = 0.247;  // buffers and control, charged for the whole run
  double dram_joules_per_byte = 32e-12;
  double link_watts_per_lane = 3.0;  // at full load
  std::uint32_t link_lanes = 4;
  double offload_tier_joules_per_byte = 1.0e-9;  // SSD or host DRAM read

  // Lane power spread over the link's bandwidth.
  double link_joules_per_byte(double link_bandwidth) const {
    return link_watts_per_lane * link_lanes / link_bandwidth;
  }
};

struct HwConfig {
  std::string name = "edge8";
  std::uint32_t cores = 8;
  std::uint32_t dpe_h = 64, dpe_w = 64;
  std::uint32_t vpe_h = 1, vpe_w = 64;
  std::uint32_t hcu_h = 1, hcu_w = 16;
  std::uint32_t wtu_h = 1, wtu_w = 16;
  double clock_hz = 800e6;
  double dram_bandwidth = 204.8e9;
  double link_bandwidth = 4e9;
  // Device DRAM reserved for the recent KV window; older tokens live
  // behind the link.
  std::uint64_t device_kv_capacity = 2ull << 30;
  PowerConfig power;

  double peak_flops() const { return 2.0 * cores * dpe_h * dpe_w * clock_hz; }
  double vpe_ops_per_s() const { return static_cast<double>(cores) * vpe_h * vpe_w * clock_hz; }
  void validate() const;
};

HwConfig edge8_preset();
HwConfig server48_preset();
// "edge8" or "server48"; throws ConfigError otherwise.
HwConfig hw_preset(const std::string& name);

struct ModelDims {
  std::uint32_t layers = 32;
  std::uint32_t q_heads = 32;
  std::uint32_t kv_heads = 8;
  std::uint32_t head_dim = 128;
  std::uint32_t hidden = 4096;
  std::uint32_t ffn = 14336;
  std::uint32_t vocab = 128256;
  std::uint32_t element_bytes = 2;  // BF16

  // K and V of one token for one layer, all KV heads.
  std::uint64_t kv_bytes_per_token_layer() const {
    return std::uint64_t{2} * kv_heads * head_dim * element_bytes;
  }
};

struct SelectionSummary {
  // Prefill retrieval ratio per layer; a single entry applies to every layer.
  std::vector<double> layer_ratio = {0.3};
  double generation_ratio = 0.02;
  // Fraction of cluster scores the early-exit walk touches per row.
  double examined_fraction = 0.16;
  double tokens_per_cluster = 32.0;

  double prefill_ratio(std::size_t layer) const {
    return layer_ratio.size() == 1 ? layer_ratio[0] : layer_ratio.at(layer);
  }
};

struct FetchSummary {
  // bytes_transferred / bytes_requested of the coalesced and per-token
  // plans. Unset values are derived from the cluster size and granularity.
  std::optional<double> coalesced_amplification;
  std::optional<double> per_token_amplification;
  std::uint64_t transfer_granularity = 4096;
};

struct WorkloadSpec {
  ModelDims model;
  std::uint64_t cache_len = 40000;
  std::uint32_t frame_tokens = 64;
  std::uint32_t batch = 1;
  std::uint32_t n_hp = 32;
  SelectionSummary selection;
  FetchSummary fetch;

  void validate() const;
};

struct SimOptions {
  bool kvpu_offload = true;     // clustering / thresholding on HCU + WTU, overlapped
  bool kvmu_coalescing = true;  // cluster-contiguous layout, merged transfers
  bool overlap = true;          // prefetch of layer l+1 during layer l
};

enum class Stage : std::size_t {
  kQkv,
  kHashbitGen,
  kClustering,
  kScore,
  kWicsum,
  kAttention,
  kFfn,
  kLmHead,
  kFetch,
  kCount,
};
inline constexpr std::size_t kStageCount = static_cast<std::size_t>(Stage::kCount);
const char* stage_name(Stage s);

struct StageCost {
  double seconds = 0.0;
  double flops = 0.0;
  double bytes = 0.0;  // DRAM bytes, or link bytes for kFetch
};

struct LayerTiming {
  double execution = 0.0;   // qkv + attention + ffn of this layer
  double prediction = 0.0;  // hashbit + clustering + score + wicsum for this layer
  double fetch = 0.0;       // transfer of this layer's selected tokens
  double latency = 0.0;     // critical-path contribution of this slot
  double exposed_prediction = 0.0;
  double exposed_fetch = 0.0;
  double dram_bytes = 0.0;
  double link_bytes = 0.0;
};

struct EnergyBreakdown {
  std::array<double, kStageCount> stage_joules{};
  double dram_joules = 0.0;
  double link_joules = 0.0;
  double offload_tier_joules = 0.0;
  double static_joules = 0.0;
  double total() const;
};

struct SimReport {
  std::array<StageCost, kStageCount> stages{};  // busy time summed over layers
  std::vector<LayerTiming> layers;               // slot 0 is the prologue for layer 0
  double latency = 0.0;                          // frame latency, TPOT or e2e total
  double execution_total = 0.0;
  double exposed_prediction = 0.0;
  double hidden_prediction = 0.0;
  double exposed_fetch = 0.0;
  double hidden_fetch = 0.0;
  double dram_bytes = 0.0;
  double link_bytes = 0.0;
  double requested_fetch_bytes = 0.0;
  EnergyBreakdown energy;

  // Filled by sim_e2e only.
  double prefill_seconds = 0.0;
  double question_seconds = 0.0;
  double generation_seconds = 0.0;

  const StageCost& stage(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  double exposed_prediction_share() const { return latency > 0 ? exposed_prediction / latency : 0.0; }
};

// One streaming frame through every decoder layer.
SimReport sim_prefill_frame(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& opts = {});
// One generated token (single query row, generation retrieval ratio).
SimReport sim_generation_token(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& opts = {});

struct Scenario {
  std::uint32_t frames = 26;
  std::uint32_t question_tokens = 25;
  std::uint32_t answer_tokens = 39;
};

// Frames, then the question, then answer tokens; the cache grows as each
// step appends its tokens.
SimReport sim_e2e(const HwConfig& hw, const Scenario& sc, const WorkloadSpec& wl, const SimOptions& opts = {});

struct AblationPoint {
  std::string name;
  SimOptions options;
  SimReport report;
  double speedup = 1.0;  // versus the first point
  double prediction_share = 0.0;
};

// GPU-style reference (no KVPU, no KVMU), KVPU only, then the requested
// toggles. Each point is a prefill frame.
std::vector<AblationPoint> ablation_report(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& toggles);

struct TimelineInterval {
  double start = 0.0;
  double duration = 0.0;
  double dram_bytes = 0.0;
  double link_bytes = 0.0;
  double dram_utilization = 0.0;
  double link_utilization = 0.0;
  double fetch_dram_share = 0.0;  // link traffic landing in DRAM, as a share of DRAM bandwidth
};

std::vector<TimelineInterval> bandwidth_timeline(const HwConfig& hw, const SimReport& report);

// Power x active time per unit plus per-byte DRAM, link and offload-tier energy.
EnergyBreakdown energy_report(const SimReport& report, const HwConfig& hw, const SimOptions& opts = {});

// `stage,seconds,joules`, then dram/link/static/total rows.
void write_report_csv(std::ostream& os, const SimReport& report);
// `start,duration,dram_bytes,link_bytes,dram_util,link_util,fetch_dram_share`
void write_timeline_csv(std::ostream& os, const std::vector<TimelineInterval>& tl);
// `stage,flops,bytes,seconds,intensity,achieved_flops`
void write_roofline_csv(std::ostream& os, const SimReport& report);

}  // namespace streamkv
