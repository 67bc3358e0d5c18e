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

// Acceptance checks. Each criterion prints one PASS or FAIL line with the
// measured value and the pinned tolerance; the exit status is nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oracles.h"
#include "streamkv/cluster.h"
#include "streamkv/hashbit.h"
#include "streamkv/kvmem.h"
#include "streamkv/oracle.h"
#include "streamkv/perfsim.h"
#include "streamkv/pipeline.h"
#include "streamkv/trace.h"
#include "streamkv/wicsum.h"

namespace {

using namespace streamkv;

// Pinned tolerances.
constexpr int kInstances = 1000;
constexpr double kCriterion1Seconds = 10.0;
constexpr double kAngleSigmas = 3.0;
constexpr double kAngleSeconds = 5.0;
constexpr double kMinAbsCorrelation = 0.7;
constexpr double kMeanRelTol = 1e-5;
constexpr double kAttentionElemTol = 1e-5;
constexpr double kSoftmaxSumTol = 1e-6;
constexpr double kMinWinShare = 0.8;
constexpr double kLatencyFactor = 2.0;
constexpr double kAnchorFrameSeconds = 0.254;
constexpr double kAnchorTpotSeconds = 0.097;
constexpr double kMaxExposedShare = 0.01;
constexpr double kMaxHcOverhead = 0.05;
constexpr double kSuiteSeconds = 120.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Random WiCSum instance, C <= 64 clusters and T_q <= 16 rows, drawn from
// Gaussian, tied, all-negative, all-equal and spiky regimes.
struct Instance {
  ScoreMatrix scores;
  std::vector<std::uint32_t> tc;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> cols(1, 64);
  std::uniform_int_distribution<std::size_t> rows(1, 16);
  std::uniform_int_distribution<std::uint32_t> count(1, 64);
  std::uniform_int_distribution<int> regime(0, 5);
  std::uniform_int_distribution<int> level(-4, 4);
  std::normal_distribution<double> n(0.0, 1.0);
  Instance in;
  ScoreMatrix& s = in.scores;
  s.cols = cols(rng);
  s.rows = rows(rng);
  in.tc.resize(s.cols);
  for (auto& t : in.tc) t = count(rng);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const int kind = regime(rng);
    for (std::size_t j = 0; j < s.cols; ++j) {
      double v = n(rng);
      if (kind == 1) v = 0.25 * level(rng);
      if (kind == 2) v = -std::abs(v) - 0.01;
      if (kind == 3) v = 0.75;
      if (kind == 4) v = (j % 7 == 2) ? 30.0 + v : 0.05 * v;
      if (kind == 5) v = 0.0;
      s.values.push_back(v);
    }
  }
  return in;
}

std::vector<double> row_of(const ScoreMatrix& s, std::size_t i) { return {s.row(i).begin(), s.row(i).end()}; }
std::set<std::uint32_t> set_of(const RowSelection& r) { return {r.clusters.begin(), r.clusters.end()}; }

oracle::Grid grid_of(const Matrix& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

Matrix matrix_of(const oracle::Grid& g) {
  Matrix m(g.size(), g[0].size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[0].size(); ++j) m(i, j) = static_cast<float>(g[i][j]);
  return m;
}

Outcome criterion1() {
  std::mt19937_64 rng(1001);
  const auto t0 = std::chrono::steady_clock::now();
  int mismatches = 0;
  for (int n = 0; n < kInstances; ++n) {
    const Instance in = random_instance(rng);
    const SelectionResult r = select_reference(in.scores, in.tc, WicsumConfig{});
    for (std::size_t i = 0; i < in.scores.rows; ++i) {
      if (set_of(r.rows[i]) != oracle::wicsum_row(row_of(in.scores, i), in.tc, 0.3)) ++mismatches;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {mismatches == 0 && secs < kCriterion1Seconds,
          fmt("mismatched rows %.0f over 1000 instances, %.2f s (limit %.0f s)", mismatches, secs, kCriterion1Seconds)};
}

Outcome criterion2() {
  std::mt19937_64 rng(1002);
  int mismatches = 0;
  std::size_t rows = 0;
  for (int n = 0; n < kInstances; ++n) {
    const Instance in = random_instance(rng);
    WicsumConfig cfg;
    cfg.th_r_wics = (n % 4 == 3) ? 1.0 : 0.1 + 0.2 * (n % 4);
    cfg.bucket_count = 2 + n % 15;
    cfg.refine_limit = 1 + n % 8;
    const SelectionResult ref = select_reference(in.scores, in.tc, cfg);
    const SelectionResult ee = select_early_exit(in.scores, in.tc, cfg);
    for (std::size_t i = 0; i < in.scores.rows; ++i, ++rows) {
      if (set_of(ee.rows[i]) != set_of(ref.rows[i])) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("mismatched rows %.0f of %.0f", mismatches, static_cast<double>(rows))};
}

Outcome criterion3() {
  std::mt19937_64 rng(1003);
  int violations = 0;
  std::size_t checked = 0;
  for (int n = 0; n < kInstances; ++n) {
    const Instance in = random_instance(rng);
    const SelectionResult r = select_reference(in.scores, in.tc, WicsumConfig{});
    for (std::size_t i = 0; i < in.scores.rows; ++i) {
      const RowSelection& row = r.rows[i];
      if (row.fallback) continue;
      ++checked;
      double acc = 0.0;
      double without_last = 0.0;
      for (std::size_t t = 0; t < row.clusters.size(); ++t) {
        const std::uint32_t j = row.clusters[t];
        const double w = std::max(in.scores.at(i, j), 0.0) * in.tc[j];
        acc += w;
        if (t + 1 < row.clusters.size()) without_last += w;
      }
      if (!(acc > row.threshold) || !(without_last <= row.threshold)) ++violations;
    }
  }
  return {violations == 0 && checked > 0,
          fmt("violations %.0f over %.0f non-fallback rows", violations, static_cast<double>(checked))};
}

Outcome criterion4() {
  std::mt19937_64 rng(1004);
  int changed = 0;
  for (int n = 0; n < kInstances; ++n) {
    const Instance in = random_instance(rng);
    const SelectionResult base = select_reference(in.scores, in.tc, WicsumConfig{});
    for (double c : {0.5, 2.0, 100.0}) {
      ScoreMatrix s = in.scores;
      for (double& v : s.values) v *= c;
      const SelectionResult a = select_reference(s, in.tc, WicsumConfig{});
      const SelectionResult b = select_early_exit(s, in.tc, WicsumConfig{});
      for (std::size_t i = 0; i < s.rows; ++i) {
        if (set_of(a.rows[i]) != set_of(base.rows[i]) || set_of(b.rows[i]) != set_of(base.rows[i])) ++changed;
      }
    }
  }
  return {changed == 0, fmt("rows changed by scaling: %.0f", changed)};
}

Outcome criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = 64;
  const std::size_t seeds = 400;
  const double theta = std::numbers::pi / 4;
  Matrix pair(2, dim);
  pair(0, 0) = 1.0f;
  pair(1, 0) = static_cast<float>(std::cos(theta));
  pair(1, 1) = static_cast<float>(std::sin(theta));
  double sum = 0.0;
  double sq = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const HashBits b = generate_hashbits(pair, make_hyperplanes(dim, 32, 50000 + s));
    const double d = hamming(b.row(0), b.row(1));
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(seeds);
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double expect = 32.0 * theta / std::numbers::pi;
  return {std::abs(mean - expect) <= kAngleSigmas * se && secs < kAngleSeconds,
          fmt("mean %.3f vs 8 (3 SE = %.3f), %.2f s", mean, kAngleSigmas * se, secs)};
}

Outcome criterion6() {
  const KvTrace t = generate_synthetic_trace({TraceDims{1, 1, 64, 32, 16}, 0.9, 606});
  const Matrix keys = t.stacked_keys(0, 0, 0, 16);
  const auto pairs = sample_token_pairs(16, 32, 2000, 6060);
  const double r = hamming_cosine_correlation(keys, make_hyperplanes(64, 32, 6), pairs);
  return {r < 0 && std::abs(r) >= kMinAbsCorrelation, fmt("Pearson r = %.4f over 2000 pairs (need <= -0.7)", r)};
}

Outcome criterion7() {
  std::mt19937_64 rng(1007);
  std::uniform_int_distribution<std::uint32_t> dim(4, 64);
  std::uniform_int_distribution<std::uint32_t> tok(1, 16);
  std::uniform_int_distribution<std::uint32_t> frames(1, 8);
  std::uniform_int_distribution<std::uint32_t> th(0, 12);
  std::uniform_real_distribution<double> rho(0.0, 1.0);
  int failures = 0;
  int singleton_failures = 0;
  for (int n = 0; n < 100; ++n) {
    const TraceDims d{1, 1, dim(rng), tok(rng), frames(rng)};
    const KvTrace t = generate_synthetic_trace({d, rho(rng), static_cast<std::uint64_t>(n)});
    const auto planes = make_hyperplanes(d.head_dim, 32, 700 + n);
    const std::uint32_t th_hp = th(rng);
    auto build = [&](std::uint32_t threshold) {
      HcTable table({threshold, 32}, d.head_dim);
      for (std::size_t f = 0; f < d.num_frames; ++f) {
        const Matrix& k = t.at(f, 0, 0).key;
        assign_frame(table, k, generate_hashbits(k, planes), planes);
      }
      return table;
    };
    const HcTable table = build(th_hp);
    const Matrix all = t.stacked_keys(0, 0, 0, d.num_frames);
    std::vector<int> seen(all.rows(), 0);
    std::size_t total = 0;
    bool ok = table.next_token_id() == all.rows();
    for (const auto& e : table.entries()) {
      ok = ok && e.token_count == e.token_ids.size() && e.token_count > 0;
      total += e.token_count;
      std::vector<double> mean(d.head_dim, 0.0);
      for (std::uint32_t id : e.token_ids) {
        if (id >= seen.size()) {
          ok = false;
          continue;
        }
        ++seen[id];
        for (std::size_t c = 0; c < d.head_dim; ++c) mean[c] += all(id, c);
      }
      double err = 0.0;
      double norm = 0.0;
      for (std::size_t c = 0; c < d.head_dim; ++c) {
        mean[c] /= e.token_count;
        err += (mean[c] - e.key_cluster[c]) * (mean[c] - e.key_cluster[c]);
        norm += mean[c] * mean[c];
      }
      ok = ok && std::sqrt(err) <= kMeanRelTol * std::max(1.0, std::sqrt(norm));
    }
    for (int c : seen) ok = ok && c == 1;
    ok = ok && total == all.rows() && table == build(th_hp);
    if (!ok) ++failures;

    const HcTable single = build(0);
    bool singles = single.size() == all.rows();
    for (const auto& e : single.entries()) singles = singles && e.token_count == 1;
    if (!singles) ++singleton_failures;
  }
  return {failures == 0 && singleton_failures == 0,
          fmt("invariant failures %.0f / 100 traces, th_hp=0 non-singleton traces %.0f", failures, singleton_failures)};
}

Outcome criterion8() {
  std::mt19937_64 rng(1008);
  std::uniform_int_distribution<std::size_t> nq(1, 8);
  std::uniform_int_distribution<std::size_t> nk(1, 64);
  std::uniform_int_distribution<std::size_t> nd(1, 32);
  std::bernoulli_distribution coin(0.5);
  double worst_elem = 0.0;
  double worst_sum = 0.0;
  int monotone_failures = 0;
  for (int n = 0; n < 500; ++n) {
    const std::size_t q_rows = nq(rng);
    const std::size_t keys = nk(rng);
    const std::size_t d = nd(rng);
    const oracle::Grid qg = oracle::random_grid(q_rows, d, rng);
    const oracle::Grid kg = oracle::random_grid(keys, d, rng);
    const oracle::Grid vg = oracle::random_grid(keys, 1 + d % 5, rng);
    const Matrix q = matrix_of(qg);
    const Matrix k = matrix_of(kg);
    const Matrix v = matrix_of(vg);
    std::vector<std::uint32_t> all(keys);
    for (std::uint32_t j = 0; j < keys; ++j) all[j] = j;
    const Matrix light = light_attention(q, k, v, all);
    const Matrix exact = exact_attention(q, k, v);
    for (std::size_t i = 0; i < light.rows(); ++i)
      for (std::size_t c = 0; c < light.cols(); ++c)
        worst_elem = std::max(worst_elem, static_cast<double>(std::abs(light(i, c) - exact(i, c))));
    const AttentionProbs p = attention_probabilities(q, k);
    for (std::size_t i = 0; i < p.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p.cols; ++j) s += p.at(i, j);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    // Nested random selections, checked with the library and the oracle.
    std::vector<bool> keep(keys, false);
    std::vector<std::uint32_t> sel;
    double prev_lib = 0.0;
    double prev_oracle = 0.0;
    for (std::uint32_t j = 0; j < keys; ++j) {
      if (!coin(rng) && j + 1 < keys) continue;
      keep[j] = true;
      sel.push_back(j);
      const double lib = evaluate_selection(q, k, v, sel).attention_mass_recall;
      const double orc = oracle::attention_mass(grid_of(q), grid_of(k), keep);
      if (lib + 1e-12 < prev_lib || orc + 1e-12 < prev_oracle || std::abs(lib - orc) > 1e-9) ++monotone_failures;
      prev_lib = lib;
      prev_oracle = orc;
    }
  }
  return {worst_elem <= kAttentionElemTol && worst_sum <= kSoftmaxSumTol && monotone_failures == 0,
          fmt("max |light-exact| %.2e, max |rowsum-1| %.2e, recall violations %.0f", worst_elem, worst_sum,
              monotone_failures)};
}

// Oracle recall of the fixed top-k baseline at exactly `budget` tokens,
// linear between the bracketing k; k = 0 is (0 tokens, 0 recall).
double oracle_baseline_recall(const ScoreMatrix& scores, const HcTable& table, const oracle::Grid& q,
                              const oracle::Grid& k, std::size_t budget) {
  auto tokens_at = [&](std::size_t kk) {
    std::set<std::uint32_t> clusters;
    for (std::size_t i = 0; i < scores.rows; ++i) {
      for (std::uint32_t c : oracle::topk_row(row_of(scores, i), kk)) clusters.insert(c);
    }
    std::vector<bool> keep(k.size(), false);
    std::size_t n = 0;
    for (std::uint32_t c : clusters) {
      for (std::uint32_t id : table.entry(c).token_ids) {
        keep[id] = true;
        ++n;
      }
    }
    return std::make_pair(n, keep);
  };
  std::size_t lo_tokens = 0;
  double lo_recall = 0.0;
  for (std::size_t kk = 1; kk <= scores.cols; ++kk) {
    const auto [n, keep] = tokens_at(kk);
    const double recall = oracle::attention_mass(q, k, keep);
    if (n >= budget) {
      if (n == lo_tokens) return recall;
      const double w = static_cast<double>(budget - lo_tokens) / static_cast<double>(n - lo_tokens);
      return lo_recall + w * (recall - lo_recall);
    }
    lo_tokens = n;
    lo_recall = recall;
  }
  return lo_recall;
}

Outcome criterion9() {
  // Default retrieval parameters on AR(1) traces: 4 seeds x 4 layers x 4 heads.
  std::size_t slices = 0;
  std::size_t wins = 0;
  double ratio_spread = 0.0;
  double mean_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const KvTrace t = generate_synthetic_trace({TraceDims{4, 4, 64, 32, 16}, 0.9, seed});
    RetrievalParams p;
    p.hash_seed = seed;
    const RetrievalResult r = run_retrieval(t, p);
    const std::size_t last = t.dims().num_frames - 1;
    for (const auto& s : r.slices) {
      const oracle::Grid q = grid_of(t.at(last, s.layer, s.head).query);
      const oracle::Grid k = grid_of(t.stacked_keys(s.layer, s.head, 0, last));
      std::vector<bool> keep(k.size(), false);
      for (std::uint32_t id : s.selection.union_token_ids) keep[id] = true;
      const double selected = oracle::attention_mass(q, k, keep);
      const ScoreMatrix scores = score_clusters(t.at(last, s.layer, s.head).query, *s.table);
      const double base = oracle_baseline_recall(scores, *s.table, q, k, s.selection.union_token_ids.size());
      ++slices;
      if (selected >= base) ++wins;
      mean_gap += selected - base;
    }
    const auto lr = r.layer_ratios();
    double m = 0.0;
    for (double x : lr) m += x;
    m /= static_cast<double>(lr.size());
    double var = 0.0;
    for (double x : lr) var += (x - m) * (x - m);
    ratio_spread = std::max(ratio_spread, std::sqrt(var / static_cast<double>(lr.size())));
  }
  const double share = static_cast<double>(wins) / static_cast<double>(slices);
  return {share >= kMinWinShare && ratio_spread > 0.0,
          fmt("recall >= top-k at matched budget in %.1f%% of slices (need 80%%), mean gap %+.4f, "
              "layer-ratio std %.4f",
              100.0 * share, mean_gap / static_cast<double>(slices), ratio_spread)};
}

Outcome criterion10() {
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<std::uint32_t> ntok(1, 24);
  std::uniform_int_distribution<std::uint32_t> ncl(0, 6);
  std::bernoulli_distribution pick(0.35);
  int conservation = 0;
  int fifo = 0;
  int coalescing = 0;
  std::size_t requests = 0;
  for (int run = 0; run < 40; ++run) {
    TierConfig cfg;
    cfg.transfer_granularity = std::uint64_t{64} << (run % 7);
    cfg.host_capacity = (run % 2) ? 0 : 8192;
    cfg.device_capacity = 4096 + 1024 * (run % 5);
    LayoutMap grouped(cfg.transfer_granularity, LayoutPolicy::kClusterGrouped);
    LayoutMap arrival(cfg.transfer_granularity, LayoutPolicy::kArrivalOrder);
    std::uint32_t next = 0;
    std::uint64_t bytes = 0;
    for (int f = 0; f < 25; ++f) {
      const std::uint32_t n = ntok(rng);
      std::vector<std::uint32_t> ids(n);
      std::vector<std::uint32_t> cl(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        ids[i] = next + i;
        cl[i] = ncl(rng);
      }
      next += n;
      bytes += 128u * n;
      for (LayoutMap* m : {&grouped, &arrival}) {
        append_frame(*m, ids, cl, 128);
        evict_if_needed(*m, cfg);
        const std::uint64_t sum = m->tier_bytes(Tier::kDevice) + m->tier_bytes(Tier::kHost) + m->tier_bytes(Tier::kStorage);
        if (sum != bytes || m->size() != next || m->tier_bytes(Tier::kDevice) > cfg.device_capacity) ++conservation;
        bool resident = false;
        Tier prev = Tier::kStorage;
        for (const auto& fr : m->frames()) {
          // Tiers never move toward the device along the append order.
          if (static_cast<int>(fr.tier) > static_cast<int>(prev)) ++fifo;
          prev = fr.tier;
          if (fr.tier == Tier::kDevice) resident = true;
          else if (resident) ++fifo;
        }
      }
      std::vector<std::uint32_t> req;
      for (std::uint32_t id = 0; id < next; ++id)
        if (pick(rng)) req.push_back(id);
      for (const LayoutMap* m : {&grouped, &arrival}) {
        const FetchPlan a = plan_fetch(*m, req, cfg);
        const FetchPlan b = plan_fetch_per_token(*m, req, cfg);
        ++requests;
        std::size_t off = 0;
        for (std::uint32_t id : req) off += m->placement(id).tier != Tier::kDevice;
        if (a.tokens_fetched != off || b.tokens_fetched != off || a.bytes_requested != 128u * off) ++conservation;
        if (a.transaction_count > b.transaction_count) ++coalescing;
      }
    }
  }
  // 32 tokens x 256 B of one cluster behind the link at 4 KiB granularity.
  LayoutMap m(4096);
  std::vector<std::uint32_t> ids(32);
  for (std::uint32_t i = 0; i < 32; ++i) ids[i] = i;
  append_frame(m, ids, std::vector<std::uint32_t>(32, 0), 256);
  append_frame(m, std::vector<std::uint32_t>{32}, std::vector<std::uint32_t>{0}, 256);
  TierConfig cfg;
  cfg.device_capacity = 256;
  evict_if_needed(m, cfg);
  const FetchPlan p = plan_fetch(m, ids, cfg);
  const bool example = p.ranges.size() == 1 && p.transaction_count == 2 && p.bytes_transferred == 8192;
  return {conservation == 0 && fifo == 0 && coalescing == 0 && example,
          fmt("conservation %.0f, fifo %.0f, coalesced>naive %.0f violations", conservation, fifo, coalescing) +
              fmt(" over %.0f requests; example ranges=%.0f transactions=%.0f", static_cast<double>(requests),
                  static_cast<double>(p.ranges.size()), static_cast<double>(p.transaction_count))};
}

Outcome criterion11() {
  const HwConfig hw = edge8_preset();
  WorkloadSpec wl;
  wl.selection.layer_ratio = {0.3};
  wl.selection.generation_ratio = 0.02;
  std::vector<double> lat;
  for (std::uint64_t len : {1000u, 5000u, 10000u, 20000u, 40000u}) {
    wl.cache_len = len;
    lat.push_back(sim_prefill_frame(hw, wl).latency);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < lat.size(); ++i) monotone = monotone && lat[i] > lat[i - 1];
  const double frame = lat.back();
  wl.cache_len = 40000;
  const double tpot = sim_generation_token(hw, wl).latency;
  const double share = sim_prefill_frame(hw, wl).exposed_prediction_share();

  std::mt19937_64 rng(1011);
  std::uniform_int_distribution<std::uint64_t> len(0, 200000);
  std::uniform_real_distribution<double> ratio(0.01, 1.0);
  std::uniform_real_distribution<double> scale(0.25, 4.0);
  std::bernoulli_distribution coin(0.5);
  int overlap_violations = 0;
  for (int i = 0; i < 100; ++i) {
    HwConfig h = coin(rng) ? edge8_preset() : server48_preset();
    h.link_bandwidth *= scale(rng);
    h.dram_bandwidth *= scale(rng);
    WorkloadSpec w;
    w.cache_len = len(rng);
    w.selection.layer_ratio = {ratio(rng)};
    w.selection.generation_ratio = ratio(rng);
    SimOptions on{coin(rng), coin(rng), true};
    SimOptions off = on;
    off.overlap = false;
    if (sim_prefill_frame(h, w, on).latency > sim_prefill_frame(h, w, off).latency * (1 + 1e-12)) ++overlap_violations;
    if (sim_generation_token(h, w, on).latency > sim_generation_token(h, w, off).latency * (1 + 1e-12))
      ++overlap_violations;
  }
  const bool frame_ok = frame >= kAnchorFrameSeconds / kLatencyFactor && frame <= kAnchorFrameSeconds * kLatencyFactor;
  const bool tpot_ok = tpot >= kAnchorTpotSeconds / kLatencyFactor && tpot <= kAnchorTpotSeconds * kLatencyFactor;
  std::string detail = fmt("frame@40K %.1f ms (127-508), TPOT %.1f ms (48.5-194), exposed share %.3f%%", frame * 1e3,
                           tpot * 1e3, share * 100);
  detail += fmt(", ms@1K..40K %.0f", lat[0] * 1e3) + fmt("/%.0f", lat[1] * 1e3) + fmt("/%.0f", lat[2] * 1e3) +
            fmt("/%.0f", lat[3] * 1e3) + fmt("/%.0f", lat[4] * 1e3) + fmt(", overlap violations %.0f", overlap_violations);
  return {frame_ok && tpot_ok && monotone && share < kMaxExposedShare && overlap_violations == 0, detail};
}

Outcome criterion12() {
  const std::size_t dim = 128;
  HcTable table({7, 32}, dim);
  const auto planes = make_hyperplanes(dim, 32, 12);
  // Four clusters of exactly 32 identical keys each, one per signed axis pair.
  for (std::size_t c = 0; c < 4; ++c) {
    Matrix k(32, dim);
    for (std::size_t i = 0; i < 32; ++i) {
      for (std::size_t d = 0; d < dim; ++d) k(i, d) = ((d / 32) == c) ? 1.0f : -1.0f;
    }
    assign_frame(table, k, generate_hashbits(k, planes), planes);
  }
  const ClusterStats s = cluster_stats(table);
  const double per_entry = static_cast<double>(hc_entry_bytes(dim, 32, 32)) / (32.0 * 2 * dim * 4);
  return {s.mean_tokens_per_cluster == 32.0 && s.hc_overhead_ratio < kMaxHcOverhead && per_entry < kMaxHcOverhead,
          fmt("overhead %.3f%% of K+V at %.0f tokens/cluster (limit 5%%), record formula %.3f%%",
              s.hc_overhead_ratio * 100, s.mean_tokens_per_cluster, per_entry * 100)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"wicsum_reference_matches_bruteforce", criterion1},
      {"early_exit_matches_reference", criterion2},
      {"selection_is_minimal_prefix", criterion3},
      {"selection_is_scale_invariant", criterion4},
      {"hash_angle_law", criterion5},
      {"hamming_cosine_correlation", criterion6},
      {"clustering_invariants", criterion7},
      {"attention_oracles", criterion8},
      {"selection_beats_topk_at_budget", criterion9},
      {"kvmu_properties", criterion10},
      {"simulator_anchors", criterion11},
      {"hc_table_overhead", criterion12},
  };
  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2zu %-38s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of %zu criteria passed in %.1f s (suite limit %.0f s)\n", static_cast<int>(criteria.size()) - failed,
              criteria.size(), total, kSuiteSeconds);
  return failed == 0 && total < kSuiteSeconds ? 0 : 1;
}
