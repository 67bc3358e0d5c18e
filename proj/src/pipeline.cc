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

#include "streamkv/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include "streamkv/errors.h"

namespace streamkv {
namespace {

std::size_t union_tokens(const SelectionResult& sel, const HcTable& table) {
  std::size_t n = 0;
  for (std::uint32_t c : sel.union_cluster_ids) n += table.entry(c).token_count;
  return n;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void RetrievalParams::validate() const {
  if (n_hp == 0) throw ConfigError("n_hp must be >= 1");
  if (element_bytes == 0) throw ConfigError("element_bytes must be >= 1");
  if (device_frames && *device_frames == 0) throw ConfigError("device_frames must be >= 1");
  wicsum.validate();
  tiers.validate();
}

void FetchTotals::add(const FetchPlan& p) {
  ranges += p.ranges.size();
  transactions += p.transaction_count;
  bytes_requested += p.bytes_requested;
  bytes_transferred += p.bytes_transferred;
}

SliceResult run_slice(const KvTrace& trace, std::size_t layer, std::size_t head, const HyperplaneSet& planes,
                      const RetrievalParams& params) {
  params.validate();
  const TraceDims& dims = trace.dims();
  if (dims.num_frames < 2) throw DegenerateError("retrieval needs at least two frames");

  SliceResult out;
  out.layer = layer;
  out.head = head;
  HcTable table(ClusterConfig{params.th_hp, params.n_hp}, dims.head_dim);
  const std::uint32_t bytes_per_token = 2 * dims.head_dim * params.element_bytes;
  TierConfig tiers = params.tiers;
  const std::uint64_t g = tiers.transfer_granularity;
  if (params.device_frames) {
    const std::uint64_t frame_bytes = std::uint64_t{bytes_per_token} * dims.tokens_per_frame;
    tiers.device_capacity = *params.device_frames * ((frame_bytes + g - 1) / g * g);
  }
  LayoutMap grouped(g, LayoutPolicy::kClusterGrouped);
  LayoutMap arrival(g, LayoutPolicy::kArrivalOrder);

  double examined = 0.0;
  std::size_t examined_rows = 0;
  const std::size_t last = dims.num_frames - 1;
  for (std::size_t f = 0; f < dims.num_frames; ++f) {
    const HeadTensors& h = trace.at(f, layer, head);
    if (f > 0) {
      const ScoreMatrix scores = score_clusters(h.query, table, params.scaled_scores);
      const auto tc = table.token_counts();
      SelectionResult sel = select_early_exit(scores, tc, params.wicsum);
      map_to_tokens(sel, table);
      for (const auto& r : sel.rows) examined += r.examined_fraction;
      examined_rows += sel.rows.size();
      out.coalesced.add(plan_fetch(grouped, sel.union_token_ids, tiers));
      out.per_token.add(plan_fetch_per_token(grouped, sel.union_token_ids, tiers));
      out.arrival.add(plan_fetch(arrival, sel.union_token_ids, tiers));

      if (f == last) {
        const Matrix k = trace.stacked_keys(layer, head, 0, last);
        const Matrix v = trace.stacked_values(layer, head, 0, last);
        const AttentionProbs probs = attention_probabilities(h.query, k);
        const Matrix exact = exact_attention(h.query, k, v);
        out.quality = evaluate_selection(h.query, k, v, probs, exact, sel.union_token_ids);

        // Fixed-k baseline. Union size grows with k, so the budget is
        // bracketed by consecutive k; the closest one is reported, and the
        // recall at exactly the budget is interpolated between the two.
        const std::size_t budget = sel.union_token_ids.size();
        std::size_t lo_tokens = 0;
        double lo_recall = 0.0;
        std::size_t lo_k = 0;
        std::size_t hi_k = scores.cols;
        for (std::size_t kk = 1; kk <= scores.cols; ++kk) {
          const std::size_t n = union_tokens(select_topk_baseline(scores, tc, kk), table);
          if (n >= budget) {
            hi_k = kk;
            break;
          }
          lo_k = kk;
          lo_tokens = n;
        }
        auto baseline_at = [&](std::size_t kk) {
          SelectionResult b = select_topk_baseline(scores, tc, kk);
          map_to_tokens(b, table);
          return std::make_pair(b.union_token_ids.size(),
                                evaluate_selection(h.query, k, v, probs, exact, b.union_token_ids));
        };
        const auto [hi_tokens, hi_quality] = baseline_at(hi_k);
        std::optional<QualityReport> lo_quality;
        if (lo_k > 0) {
          lo_quality = baseline_at(lo_k).second;
          lo_recall = lo_quality->attention_mass_recall;
        }
        const bool take_lo = lo_k > 0 && budget - lo_tokens < hi_tokens - budget;
        out.baseline_k = take_lo ? lo_k : hi_k;
        out.baseline_tokens = take_lo ? lo_tokens : hi_tokens;
        out.baseline_quality = take_lo ? *lo_quality : hi_quality;
        if (hi_tokens == lo_tokens) {
          out.baseline_recall_at_budget = hi_quality.attention_mass_recall;
        } else {
          const double w = static_cast<double>(budget - lo_tokens) / static_cast<double>(hi_tokens - lo_tokens);
          out.baseline_recall_at_budget = lo_recall + w * (hi_quality.attention_mass_recall - lo_recall);
        }
        out.selection = std::move(sel);
        out.clusters = cluster_stats(table);
        out.table = table;
        break;
      }
    }
    const HashBits bits = generate_hashbits(h.key, planes);
    const FrameAssignment a = assign_frame(table, h.key, bits, planes);
    append_frame(grouped, a.token_ids, a.cluster_ids, bytes_per_token);
    append_frame(arrival, a.token_ids, a.cluster_ids, bytes_per_token);
    evict_if_needed(grouped, tiers);
    evict_if_needed(arrival, tiers);
  }
  out.examined_fraction = examined_rows > 0 ? examined / static_cast<double>(examined_rows) : 0.0;
  return out;
}

RetrievalResult run_retrieval(const KvTrace& trace, const RetrievalParams& params) {
  params.validate();
  const TraceDims& dims = trace.dims();
  std::vector<HyperplaneSet> planes;
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    planes.push_back(make_hyperplanes(dims.head_dim, params.n_hp, layer_hyperplane_seed(params.hash_seed, l)));
  }
  RetrievalResult r;
  r.dims = dims;
  r.slices.resize(dims.heads_per_frame());
  parallel_for(r.slices.size(), params.threads, [&](std::size_t i) {
    const std::size_t layer = i / dims.num_heads;
    r.slices[i] = run_slice(trace, layer, i % dims.num_heads, planes[layer], params);
  });
  return r;
}

double RetrievalResult::mean_ratio() const {
  double s = 0.0;
  for (const auto& x : slices) s += x.selection.retrieval_ratio;
  return slices.empty() ? 0.0 : s / static_cast<double>(slices.size());
}

double RetrievalResult::mean_recall() const {
  double s = 0.0;
  for (const auto& x : slices) s += x.quality.attention_mass_recall;
  return slices.empty() ? 0.0 : s / static_cast<double>(slices.size());
}

std::vector<double> RetrievalResult::layer_ratios() const {
  std::vector<double> sum(dims.num_layers, 0.0);
  for (const auto& x : slices) sum[x.layer] += x.selection.retrieval_ratio;
  for (double& v : sum) v /= static_cast<double>(dims.num_heads);
  return sum;
}

SelectionSummary RetrievalResult::selection_summary(std::size_t model_layers) const {
  SelectionSummary s;
  if (slices.empty()) return s;
  const auto per_layer = layer_ratios();
  if (per_layer.size() == model_layers) {
    s.layer_ratio = per_layer;
  } else {
    s.layer_ratio = {mean_ratio()};
  }
  for (double& v : s.layer_ratio) v = std::clamp(v, 1e-6, 1.0);
  double ex = 0.0;
  double tpc = 0.0;
  for (const auto& x : slices) {
    ex += x.examined_fraction;
    tpc += x.clusters.mean_tokens_per_cluster;
  }
  const double n = static_cast<double>(slices.size());
  s.examined_fraction = std::clamp(ex / n, 1e-6, 1.0);
  s.tokens_per_cluster = std::max(1.0, tpc / n);
  return s;
}

FetchSummary RetrievalResult::fetch_summary(std::uint64_t granularity) const {
  FetchSummary f;
  f.transfer_granularity = granularity;
  FetchTotals c;
  FetchTotals p;
  for (const auto& x : slices) {
    c.bytes_requested += x.coalesced.bytes_requested;
    c.bytes_transferred += x.coalesced.bytes_transferred;
    p.bytes_requested += x.per_token.bytes_requested;
    p.bytes_transferred += x.per_token.bytes_transferred;
  }
  if (c.bytes_requested > 0) f.coalesced_amplification = c.amplification();
  if (p.bytes_requested > 0) f.per_token_amplification = p.amplification();
  return f;
}

}  // namespace streamkv
