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

#include "streamkv/perfsim.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "streamkv/csv.h"
#include "streamkv/errors.h"

namespace streamkv {
namespace {

// Elementwise VPE work per element: RMSNorm, RoPE, softmax, SiLU.
constexpr double kNormOpsPerElem = 4.0;
constexpr double kRopeOpsPerElem = 2.0;
constexpr double kSoftmaxOpsPerElem = 5.0;
constexpr double kActOpsPerElem = 2.0;

StageCost& at(std::array<StageCost, kStageCount>& a, Stage s) { return a[static_cast<std::size_t>(s)]; }

double cycles_to_seconds(double work, double per_cycle, double clock) {
  return std::ceil(work / per_cycle) / clock;
}

class CostModel {
 public:
  CostModel(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& opts)
      : hw_(hw), wl_(wl), opts_(opts), m_(wl.model) {}

  double dpe_seconds(double flops) const {
    return cycles_to_seconds(flops, 2.0 * hw_.cores * hw_.dpe_h * hw_.dpe_w, hw_.clock_hz);
  }
  double vpe_seconds(double ops) const {
    return cycles_to_seconds(ops, static_cast<double>(hw_.cores) * hw_.vpe_h * hw_.vpe_w, hw_.clock_hz);
  }
  double mem_seconds(double bytes) const { return bytes / hw_.dram_bandwidth; }

  // Roofline: the slower of the compute and memory bound, plus VPE work.
  StageCost matmul(double flops, double bytes, double vpe_ops = 0.0) const {
    StageCost c;
    c.flops = flops;
    c.bytes = bytes;
    c.seconds = std::max(dpe_seconds(flops), mem_seconds(bytes)) + (vpe_ops > 0 ? vpe_seconds(vpe_ops) : 0.0);
    return c;
  }

  double tokens_offloaded(double cache_len) const {
    const double per_token = static_cast<double>(wl_.batch) * m_.kv_bytes_per_token_layer() * m_.layers;
    const double resident = std::floor(static_cast<double>(hw_.device_kv_capacity) / per_token);
    return std::max(0.0, cache_len - resident);
  }

  double amplification() const {
    const auto& f = wl_.fetch;
    const double g = static_cast<double>(f.transfer_granularity);
    const double token = 2.0 * m_.head_dim * m_.element_bytes;
    if (opts_.kvmu_coalescing) {
      if (f.coalesced_amplification) return *f.coalesced_amplification;
      // A contiguous run of one cluster's tokens at a token-aligned offset
      // spans (run + g - token) / g pages on average.
      const double run = std::max(1.0, wl_.selection.tokens_per_cluster) * token;
      return std::max(1.0, (run + g - std::min(g, token)) / run);
    }
    if (f.per_token_amplification) return *f.per_token_amplification;
    return std::max(1.0, std::ceil(token / g) * g / token);
  }

  struct Layer {
    std::array<StageCost, kStageCount> stages{};
    double execution = 0.0;
    double prediction = 0.0;
    double fetch = 0.0;
    double requested = 0.0;
  };

  Layer layer(double q_tokens, double cache_len, double ratio, double context_tokens) const {
    Layer L;
    const double b = wl_.batch;
    const double e = m_.element_bytes;
    const double D = m_.head_dim;
    const double hidden = m_.hidden;
    const double qkv_out = (m_.q_heads + 2.0 * m_.kv_heads) * D;
    const double rows = b * q_tokens;

    at(L.stages, Stage::kQkv) =
        matmul(2.0 * rows * hidden * qkv_out, hidden * qkv_out * e + rows * (hidden + qkv_out) * e,
               rows * (kNormOpsPerElem * hidden + kRopeOpsPerElem * (m_.q_heads + m_.kv_heads) * D));

    const double attended = (cache_len > 0 ? ratio * cache_len : 0.0) + context_tokens;
    at(L.stages, Stage::kAttention) =
        matmul(4.0 * rows * m_.q_heads * D * attended + 2.0 * rows * hidden * m_.q_heads * D,
               b * attended * m_.kv_bytes_per_token_layer() + hidden * m_.q_heads * D * e,
               rows * m_.q_heads * attended * kSoftmaxOpsPerElem);

    at(L.stages, Stage::kFfn) = matmul(6.0 * rows * hidden * m_.ffn, 3.0 * hidden * m_.ffn * e,
                                       rows * (kNormOpsPerElem * hidden + kActOpsPerElem * m_.ffn));

    if (cache_len > 0) {
      const double clusters = std::ceil(cache_len / std::max(1.0, wl_.selection.tokens_per_cluster));
      const double n_hp = wl_.n_hp;
      at(L.stages, Stage::kHashbitGen) = matmul(2.0 * rows * m_.kv_heads * D * n_hp, D * n_hp * e);

      const double comparisons = rows * m_.kv_heads * clusters;
      StageCost& cl = at(L.stages, Stage::kClustering);
      cl.bytes = b * m_.kv_heads * clusters * std::ceil(n_hp / 8.0);
      // The offload toggle only changes scheduling, so both modes share
      // the XOR-accumulator and early-exit cycle counts.
      cl.seconds = cycles_to_seconds(comparisons * std::ceil(n_hp / hw_.hcu_w),
                                     static_cast<double>(hw_.hcu_h) * hw_.cores, hw_.clock_hz);
      cl.seconds = std::max(cl.seconds, mem_seconds(cl.bytes));

      at(L.stages, Stage::kScore) =
          matmul(2.0 * rows * m_.q_heads * D * clusters, b * m_.kv_heads * clusters * D * e);

      const double elements = rows * m_.q_heads * clusters;
      StageCost& wt = at(L.stages, Stage::kWicsum);
      // One preprocess pass, then the early-exit walk over examined elements.
      wt.seconds = cycles_to_seconds((1.0 + wl_.selection.examined_fraction) * elements,
                                     static_cast<double>(hw_.wtu_w) * hw_.wtu_h * hw_.cores, hw_.clock_hz);

      const double offloaded = tokens_offloaded(cache_len);
      L.requested = b * ratio * offloaded * m_.kv_bytes_per_token_layer();
      StageCost& f = at(L.stages, Stage::kFetch);
      f.bytes = L.requested * amplification();
      f.seconds = f.bytes / hw_.link_bandwidth;
    }

    L.execution = at(L.stages, Stage::kQkv).seconds + at(L.stages, Stage::kAttention).seconds +
                  at(L.stages, Stage::kFfn).seconds;
    L.prediction = at(L.stages, Stage::kHashbitGen).seconds + at(L.stages, Stage::kClustering).seconds +
                   at(L.stages, Stage::kScore).seconds + at(L.stages, Stage::kWicsum).seconds;
    L.fetch = at(L.stages, Stage::kFetch).seconds;
    return L;
  }

  StageCost lm_head(double q_tokens) const {
    const double rows = static_cast<double>(wl_.batch) * q_tokens;
    return matmul(2.0 * rows * m_.hidden * m_.vocab, static_cast<double>(m_.hidden) * m_.vocab * m_.element_bytes);
  }

 private:
  const HwConfig& hw_;
  const WorkloadSpec& wl_;
  const SimOptions& opts_;
  const ModelDims& m_;
};

// Runs `layers` decoder layers with prefetch lookahead of one layer.
//   slot 0       : prediction + fetch for layer 0 (nothing to hide under)
//   slot l+1     : execution of layer l, overlapped with prediction and
//                  fetch for layer l+1
SimReport run_pass(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& opts, double q_tokens,
                   double cache_len, double context_tokens, bool generation) {
  hw.validate();
  wl.validate();
  const CostModel model(hw, wl, opts);
  const std::uint32_t L = wl.model.layers;
  std::vector<CostModel::Layer> layers;
  layers.reserve(L);
  for (std::uint32_t l = 0; l < L; ++l) {
    const double ratio = generation ? wl.selection.generation_ratio : wl.selection.prefill_ratio(l);
    layers.push_back(model.layer(q_tokens, cache_len, ratio, context_tokens));
  }

  SimReport r;
  for (const auto& layer : layers) {
    for (std::size_t s = 0; s < kStageCount; ++s) {
      r.stages[s].seconds += layer.stages[s].seconds;
      r.stages[s].flops += layer.stages[s].flops;
      r.stages[s].bytes += layer.stages[s].bytes;
    }
    r.requested_fetch_bytes += layer.requested;
  }

  r.layers.resize(L + 1);
  {
    LayerTiming& pro = r.layers[0];
    pro.prediction = layers[0].prediction;
    pro.fetch = layers[0].fetch;
    pro.latency = pro.prediction + pro.fetch;
    pro.exposed_prediction = pro.prediction;
    pro.exposed_fetch = pro.fetch;
    const auto& st = layers[0].stages;
    pro.dram_bytes = st[static_cast<std::size_t>(Stage::kHashbitGen)].bytes +
                     st[static_cast<std::size_t>(Stage::kClustering)].bytes +
                     st[static_cast<std::size_t>(Stage::kScore)].bytes;
    pro.link_bytes = layers[0].stages[static_cast<std::size_t>(Stage::kFetch)].bytes;
  }
  for (std::uint32_t l = 0; l < L; ++l) {
    LayerTiming& t = r.layers[l + 1];
    t.execution = layers[l].execution;
    const bool has_next = l + 1 < L;
    const double pred = has_next ? layers[l + 1].prediction : 0.0;
    const double fetch = has_next ? layers[l + 1].fetch : 0.0;
    t.prediction = pred;
    t.fetch = fetch;
    if (!opts.overlap) {
      t.latency = t.execution + pred + fetch;
      t.exposed_prediction = pred;
      t.exposed_fetch = fetch;
    } else if (!opts.kvpu_offload) {
      // Prediction shares the execution engine; only the transfer overlaps.
      t.latency = pred + std::max(t.execution, fetch);
      t.exposed_prediction = pred;
      t.exposed_fetch = std::max(0.0, fetch - t.execution);
    } else {
      // Timeline: prediction in [0, pred), fetch in [pred, pred + fetch),
      // execution in [0, exec). Exposure is time a unit runs past execution.
      t.latency = std::max(t.execution, pred + fetch);
      t.exposed_prediction = std::max(0.0, pred - t.execution);
      t.exposed_fetch = std::max(0.0, pred + fetch - std::max(t.execution, pred));
    }
    const auto& st = layers[l].stages;
    t.dram_bytes = st[static_cast<std::size_t>(Stage::kQkv)].bytes + st[static_cast<std::size_t>(Stage::kAttention)].bytes +
                   st[static_cast<std::size_t>(Stage::kFfn)].bytes;
    if (has_next) {
      const auto& nx = layers[l + 1].stages;
      t.dram_bytes += nx[static_cast<std::size_t>(Stage::kHashbitGen)].bytes +
                      nx[static_cast<std::size_t>(Stage::kClustering)].bytes +
                      nx[static_cast<std::size_t>(Stage::kScore)].bytes;
      t.link_bytes = nx[static_cast<std::size_t>(Stage::kFetch)].bytes;
    }
  }

  if (generation) {
    const StageCost head = model.lm_head(q_tokens);
    r.stages[static_cast<std::size_t>(Stage::kLmHead)] = head;
    r.layers.back().execution += head.seconds;
    r.layers.back().latency += head.seconds;
    r.layers.back().dram_bytes += head.bytes;
  }

  for (const auto& t : r.layers) {
    r.latency += t.latency;
    r.execution_total += t.execution;
    r.exposed_prediction += t.exposed_prediction;
    r.exposed_fetch += t.exposed_fetch;
    r.dram_bytes += t.dram_bytes;
    r.link_bytes += t.link_bytes;
  }
  r.dram_bytes += r.link_bytes;  // fetched tokens land in device DRAM
  double pred_total = 0.0;
  double fetch_total = 0.0;
  for (const auto& layer : layers) {
    pred_total += layer.prediction;
    fetch_total += layer.fetch;
  }
  r.hidden_prediction = std::max(0.0, pred_total - r.exposed_prediction);
  r.hidden_fetch = std::max(0.0, fetch_total - r.exposed_fetch);
  r.energy = energy_report(r, hw, opts);
  return r;
}

void accumulate(SimReport& into, const SimReport& step) {
  for (std::size_t s = 0; s < kStageCount; ++s) {
    into.stages[s].seconds += step.stages[s].seconds;
    into.stages[s].flops += step.stages[s].flops;
    into.stages[s].bytes += step.stages[s].bytes;
  }
  into.layers.insert(into.layers.end(), step.layers.begin(), step.layers.end());
  into.latency += step.latency;
  into.execution_total += step.execution_total;
  into.exposed_prediction += step.exposed_prediction;
  into.hidden_prediction += step.hidden_prediction;
  into.exposed_fetch += step.exposed_fetch;
  into.hidden_fetch += step.hidden_fetch;
  into.dram_bytes += step.dram_bytes;
  into.link_bytes += step.link_bytes;
  into.requested_fetch_bytes += step.requested_fetch_bytes;
}

}  // namespace

void HwConfig::validate() const {
  if (cores == 0 || dpe_h == 0 || dpe_w == 0 || vpe_h == 0 || vpe_w == 0 || hcu_h == 0 || hcu_w == 0 ||
      wtu_h == 0 || wtu_w == 0) {
    throw ConfigError("hardware lane counts must be positive");
  }
  if (!(clock_hz > 0) || !(dram_bandwidth > 0) || !(link_bandwidth > 0)) {
    throw ConfigError("clock and bandwidths must be positive");
  }
}

HwConfig edge8_preset() { return HwConfig{}; }

HwConfig server48_preset() {
  HwConfig hw;
  hw.name = "server48";
  hw.cores = 48;
  hw.dram_bandwidth = 1935e9;
  hw.link_bandwidth = 32e9;
  hw.device_kv_capacity = 8ull << 30;
  hw.power.link_lanes = 16;
  hw.power.dram_joules_per_byte = 31e-12;
  hw.power.offload_tier_joules_per_byte = 0.16e-9;
  return hw;
}

HwConfig hw_preset(const std::string& name) {
  if (name == "edge8") return edge8_preset();
  if (name == "server48") return server48_preset();
  throw ConfigError("unknown hardware preset '" + name + "' (expected edge8 or server48)");
}

void WorkloadSpec::validate() const {
  const auto& m = model;
  if (m.layers == 0 || m.q_heads == 0 || m.kv_heads == 0 || m.head_dim == 0 || m.hidden == 0 || m.ffn == 0 ||
      m.vocab == 0 || m.element_bytes == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (frame_tokens == 0 || batch == 0 || n_hp == 0) throw ConfigError("frame_tokens, batch and n_hp must be positive");
  if (selection.layer_ratio.empty() || (selection.layer_ratio.size() != 1 && selection.layer_ratio.size() != m.layers)) {
    throw ConfigError("layer_ratio needs 1 or `layers` entries");
  }
  auto ratio_ok = [](double r) { return r > 0.0 && r <= 1.0; };
  for (double r : selection.layer_ratio) {
    if (!ratio_ok(r)) throw ConfigError("retrieval ratios must lie in (0, 1]");
  }
  if (!ratio_ok(selection.generation_ratio)) throw ConfigError("generation_ratio must lie in (0, 1]");
  if (!(selection.examined_fraction > 0.0 && selection.examined_fraction <= 1.0)) {
    throw ConfigError("examined_fraction must lie in (0, 1]");
  }
  if (!(selection.tokens_per_cluster >= 1.0)) throw ConfigError("tokens_per_cluster must be >= 1");
  if (fetch.transfer_granularity == 0) throw ConfigError("transfer_granularity must be positive");
  for (const auto& a : {fetch.coalesced_amplification, fetch.per_token_amplification}) {
    if (a && !(*a >= 1.0)) throw ConfigError("fetch amplification must be >= 1");
  }
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kQkv:
      return "qkv";
    case Stage::kHashbitGen:
      return "hashbit_gen";
    case Stage::kClustering:
      return "clustering";
    case Stage::kScore:
      return "score";
    case Stage::kWicsum:
      return "wicsum";
    case Stage::kAttention:
      return "attention";
    case Stage::kFfn:
      return "ffn";
    case Stage::kLmHead:
      return "lm_head";
    case Stage::kFetch:
      return "fetch";
    case Stage::kCount:
      break;
  }
  return "?";
}

double EnergyBreakdown::total() const {
  double t = dram_joules + link_joules + offload_tier_joules + static_joules;
  for (double j : stage_joules) t += j;
  return t;
}

SimReport sim_prefill_frame(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& opts) {
  return run_pass(hw, wl, opts, wl.frame_tokens, static_cast<double>(wl.cache_len), wl.frame_tokens, false);
}

SimReport sim_generation_token(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& opts) {
  return run_pass(hw, wl, opts, 1.0, static_cast<double>(wl.cache_len), 1.0, true);
}

SimReport sim_e2e(const HwConfig& hw, const Scenario& sc, const WorkloadSpec& wl, const SimOptions& opts) {
  SimReport total;
  WorkloadSpec step = wl;
  for (std::uint32_t f = 0; f < sc.frames; ++f) {
    const SimReport r = sim_prefill_frame(hw, step, opts);
    total.prefill_seconds += r.latency;
    accumulate(total, r);
    step.cache_len += wl.frame_tokens;
  }
  if (sc.question_tokens > 0) {
    const SimReport r = run_pass(hw, step, opts, sc.question_tokens, static_cast<double>(step.cache_len),
                                 sc.question_tokens, false);
    total.question_seconds += r.latency;
    accumulate(total, r);
    step.cache_len += sc.question_tokens;
  }
  for (std::uint32_t a = 0; a < sc.answer_tokens; ++a) {
    const SimReport r = sim_generation_token(hw, step, opts);
    total.generation_seconds += r.latency;
    accumulate(total, r);
    step.cache_len += 1;
  }
  total.energy = energy_report(total, hw, opts);
  return total;
}

std::vector<AblationPoint> ablation_report(const HwConfig& hw, const WorkloadSpec& wl, const SimOptions& toggles) {
  std::vector<AblationPoint> points = {
      {"reference", SimOptions{false, false, true}, {}, 1.0, 0.0},
      {"kvpu", SimOptions{true, false, true}, {}, 1.0, 0.0},
      {"requested", toggles, {}, 1.0, 0.0},
  };
  for (auto& p : points) {
    p.report = sim_prefill_frame(hw, wl, p.options);
    p.prediction_share = p.report.exposed_prediction_share();
    p.speedup = points[0].report.latency > 0 ? points[0].report.latency / p.report.latency : 1.0;
  }
  return points;
}

std::vector<TimelineInterval> bandwidth_timeline(const HwConfig& hw, const SimReport& report) {
  std::vector<TimelineInterval> tl;
  double t = 0.0;
  for (const auto& layer : report.layers) {
    TimelineInterval iv;
    iv.start = t;
    iv.duration = layer.latency;
    iv.link_bytes = layer.link_bytes;
    iv.dram_bytes = layer.dram_bytes + layer.link_bytes;
    if (iv.duration > 0) {
      iv.dram_utilization = iv.dram_bytes / (iv.duration * hw.dram_bandwidth);
      iv.link_utilization = iv.link_bytes / (iv.duration * hw.link_bandwidth);
      iv.fetch_dram_share = iv.link_bytes / (iv.duration * hw.dram_bandwidth);
    }
    tl.push_back(iv);
    t += layer.latency;
  }
  return tl;
}

EnergyBreakdown energy_report(const SimReport& report, const HwConfig& hw, const SimOptions& opts) {
  const PowerConfig& p = hw.power;
  const double cores = hw.cores;
  const double lxe_watts = (p.dpe_watts + p.vpe_watts) * cores;
  EnergyBreakdown e;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto stage = static_cast<Stage>(s);
    double watts = lxe_watts;
    if (stage == Stage::kClustering) watts = opts.kvpu_offload ? p.hcu_watts * cores : p.vpe_watts * cores;
    if (stage == Stage::kWicsum) watts = opts.kvpu_offload ? p.wtu_watts * cores : p.vpe_watts * cores;
    if (stage == Stage::kFetch) watts = 0.0;  // charged per byte below
    e.stage_joules[s] = watts * report.stages[s].seconds;
  }
  e.link_joules = p.link_joules_per_byte(hw.link_bandwidth) * report.link_bytes;
  e.offload_tier_joules = p.offload_tier_joules_per_byte * report.link_bytes;
  e.dram_joules = p.dram_joules_per_byte * report.dram_bytes;
  e.static_joules = p.static_watts * cores * report.latency;
  return e;
}

void write_report_csv(std::ostream& os, const SimReport& r) {
  os << "stage,seconds,joules\n";
  for (std::size_t s = 0; s < kStageCount; ++s) {
    os << stage_name(static_cast<Stage>(s)) << ',' << fmt_double(r.stages[s].seconds) << ','
       << fmt_double(r.energy.stage_joules[s]) << '\n';
  }
  os << "dram,0," << fmt_double(r.energy.dram_joules) << '\n';
  os << "link,0," << fmt_double(r.energy.link_joules + r.energy.offload_tier_joules) << '\n';
  os << "static," << fmt_double(r.latency) << ',' << fmt_double(r.energy.static_joules) << '\n';
  os << "total," << fmt_double(r.latency) << ',' << fmt_double(r.energy.total()) << '\n';
}

void write_timeline_csv(std::ostream& os, const std::vector<TimelineInterval>& tl) {
  os << "start,duration,dram_bytes,link_bytes,dram_util,link_util,fetch_dram_share\n";
  for (const auto& iv : tl) {
    os << fmt_double(iv.start) << ',' << fmt_double(iv.duration) << ',' << fmt_double(iv.dram_bytes) << ','
       << fmt_double(iv.link_bytes) << ',' << fmt_double(iv.dram_utilization) << ','
       << fmt_double(iv.link_utilization) << ',' << fmt_double(iv.fetch_dram_share) << '\n';
  }
}

void write_roofline_csv(std::ostream& os, const SimReport& r) {
  os << "stage,flops,bytes,seconds,intensity,achieved_flops\n";
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const auto& c = r.stages[s];
    os << stage_name(static_cast<Stage>(s)) << ',' << fmt_double(c.flops) << ',' << fmt_double(c.bytes) << ','
       << fmt_double(c.seconds) << ',' << fmt_double(c.bytes > 0 ? c.flops / c.bytes : 0.0) << ','
       << fmt_double(c.seconds > 0 ? c.flops / c.seconds : 0.0) << '\n';
  }
}

}  // namespace streamkv
