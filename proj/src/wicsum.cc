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

#include "streamkv/wicsum.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "streamkv/csv.h"
#include "streamkv/errors.h"

namespace streamkv {
namespace {

void check_inputs(const ScoreMatrix& scores, std::span<const std::uint32_t> tc) {
  if (scores.rows == 0 || scores.cols == 0) throw DegenerateError("empty score matrix");
  if (scores.values.size() != scores.rows * scores.cols) throw ShapeError("score matrix storage mismatch");
  if (tc.size() != scores.cols) {
    throw ShapeError("token_counts has " + std::to_string(tc.size()) + " entries for " +
                     std::to_string(scores.cols) + " clusters");
  }
  for (std::size_t j = 0; j < tc.size(); ++j) {
    if (tc[j] == 0) throw ConsistencyError("cluster " + std::to_string(j) + " has token count 0");
  }
}

// Per-row quantities shared by both selection paths.
struct RowPrep {
  std::vector<double> rect;
  std::vector<double> weight;
  double sum = 0.0;
  double threshold = 0.0;
};

RowPrep prepare(std::span<const double> raw, std::span<const std::uint32_t> tc, const WicsumConfig& cfg) {
  RowPrep p;
  p.rect.resize(raw.size());
  p.weight.resize(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    p.rect[j] = cfg.rectify ? std::max(raw[j], 0.0) : raw[j];
    p.weight[j] = p.rect[j] * static_cast<double>(tc[j]);
    p.sum += p.weight[j];
  }
  p.threshold = p.sum * cfg.th_r_wics;
  return p;
}

RowSelection fallback_row(std::span<const double> raw, const RowPrep& p) {
  RowSelection r;
  std::uint32_t best = 0;
  for (std::uint32_t j = 1; j < raw.size(); ++j) {
    if (raw[j] > raw[best]) best = j;
  }
  r.clusters = {best};
  r.sum = p.sum;
  r.threshold = p.threshold;
  r.acc = p.weight[best];
  r.fallback = true;
  r.examined_fraction = 1.0;
  return r;
}

// Descending score, then ascending id.
auto sigma_less(const std::vector<double>& rect) {
  return [&rect](std::uint32_t a, std::uint32_t b) {
    if (rect[a] != rect[b]) return rect[a] > rect[b];
    return a < b;
  };
}

void drop_zero_weight_tail(RowSelection& r, const RowPrep& p) {
  std::erase_if(r.clusters, [&](std::uint32_t j) { return !(p.rect[j] > 0.0); });
}

void finish_union(SelectionResult& out, std::size_t cols) {
  std::vector<bool> seen(cols, false);
  for (const auto& r : out.rows)
    for (std::uint32_t j : r.clusters) seen[j] = true;
  for (std::uint32_t j = 0; j < cols; ++j)
    if (seen[j]) out.union_cluster_ids.push_back(j);
}

}  // namespace

void WicsumConfig::validate() const {
  if (!(th_r_wics > 0.0 && th_r_wics <= 1.0)) throw ConfigError("th_r_wics must lie in (0, 1]");
  if (bucket_count < 2) throw ConfigError("bucket_count must be >= 2");
  if (refine_limit < 1) throw ConfigError("refine_limit must be >= 1");
}

ScoreMatrix score_clusters(const Matrix& queries, const HcTable& table, bool scaled) {
  if (table.empty()) throw DegenerateError("score_clusters: empty HC table");
  if (queries.cols() != table.dim()) {
    throw ShapeError("score_clusters: query dim " + std::to_string(queries.cols()) + " != key dim " +
                     std::to_string(table.dim()));
  }
  ScoreMatrix s;
  s.rows = queries.rows();
  s.cols = table.size();
  s.scaled = scaled;
  s.values.resize(s.rows * s.cols);
  const double scale = scaled ? 1.0 / std::sqrt(static_cast<double>(table.dim())) : 1.0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    auto q = queries.row(i);
    for (std::size_t j = 0; j < s.cols; ++j) {
      s.values[i * s.cols + j] = dot(q, std::span<const double>(table.entries()[j].key_cluster)) * scale;
    }
  }
  return s;
}

SelectionResult select_reference(const ScoreMatrix& scores, std::span<const std::uint32_t> token_counts,
                                 const WicsumConfig& cfg) {
  cfg.validate();
  check_inputs(scores, token_counts);
  SelectionResult out;
  out.rows.reserve(scores.rows);
  std::vector<std::uint32_t> order(scores.cols);

  for (std::size_t i = 0; i < scores.rows; ++i) {
    const auto raw = scores.row(i);
    const RowPrep p = prepare(raw, token_counts, cfg);
    if (cfg.rectify && p.sum == 0.0) {
      out.rows.push_back(fallback_row(raw, p));
      continue;
    }
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), sigma_less(p.rect));

    RowSelection r;
    r.sum = p.sum;
    r.threshold = p.threshold;
    bool crossed = false;
    for (std::uint32_t j : order) {
      r.acc += p.weight[j];
      r.clusters.push_back(j);
      if (r.acc > p.threshold) {
        crossed = true;
        break;
      }
    }
    if (!crossed) {
      r.saturated = true;
      if (cfg.rectify) drop_zero_weight_tail(r, p);
    }
    out.rows.push_back(std::move(r));
  }
  finish_union(out, scores.cols);
  return out;
}

SelectionResult select_early_exit(const ScoreMatrix& scores, std::span<const std::uint32_t> token_counts,
                                  const WicsumConfig& cfg) {
  cfg.validate();
  if (!cfg.rectify) throw ConfigError("early-exit selection requires rectified scores");
  check_inputs(scores, token_counts);
  const std::size_t nb = cfg.bucket_count;
  SelectionResult out;
  out.rows.reserve(scores.rows);
  std::vector<std::vector<std::uint32_t>> buckets(nb);
  std::vector<double> bucket_sum(nb);

  for (std::size_t i = 0; i < scores.rows; ++i) {
    const auto raw = scores.row(i);
    // Preprocess: weighted sum, threshold and value range of the row.
    const RowPrep p = prepare(raw, token_counts, cfg);
    if (p.sum == 0.0) {
      out.rows.push_back(fallback_row(raw, p));
      continue;
    }
    const auto [mn, mx] = std::minmax_element(p.rect.begin(), p.rect.end());
    double lo = *mn;
    double hi = *mx;

    std::vector<std::uint32_t> cand(scores.cols);
    std::iota(cand.begin(), cand.end(), 0u);
    RowSelection r;
    r.sum = p.sum;
    r.threshold = p.threshold;
    bool crossed = false;
    bool top_level = true;
    std::size_t examined = 0;

    while (true) {
      if (!(hi > lo) || cand.size() <= cfg.refine_limit) {
        std::sort(cand.begin(), cand.end(), sigma_less(p.rect));
        std::size_t consumed = 0;
        for (std::uint32_t j : cand) {
          ++consumed;
          r.acc += p.weight[j];
          r.clusters.push_back(j);
          if (r.acc > p.threshold) {
            crossed = true;
            break;
          }
        }
        if (top_level) examined = consumed;
        break;
      }

      for (auto& b : buckets) b.clear();
      std::fill(bucket_sum.begin(), bucket_sum.end(), 0.0);
      const double width = hi - lo;
      for (std::uint32_t j : cand) {
        auto b = static_cast<std::size_t>((p.rect[j] - lo) / width * static_cast<double>(nb));
        b = std::min(b, nb - 1);
        buckets[b].push_back(j);
        bucket_sum[b] += p.weight[j];
      }

      std::size_t boundary = nb;
      for (std::size_t b = nb; b-- > 0;) {
        if (buckets[b].empty()) continue;
        if (top_level) examined += buckets[b].size();
        if (r.acc + bucket_sum[b] <= p.threshold) {
          r.clusters.insert(r.clusters.end(), buckets[b].begin(), buckets[b].end());
          r.acc += bucket_sum[b];
        } else {
          boundary = b;
          break;
        }
      }
      if (boundary == nb) break;

      cand = buckets[boundary];
      const auto [bmn, bmx] = std::minmax_element(cand.begin(), cand.end(),
                                                  [&](std::uint32_t a, std::uint32_t b) { return p.rect[a] < p.rect[b]; });
      lo = p.rect[*bmn];
      hi = p.rect[*bmx];
      top_level = false;
    }

    if (!crossed) {
      r.saturated = true;
      drop_zero_weight_tail(r, p);
    }
    r.examined_fraction = static_cast<double>(examined) / static_cast<double>(scores.cols);
    out.rows.push_back(std::move(r));
  }
  finish_union(out, scores.cols);
  return out;
}

SelectionResult select_topk_baseline(const ScoreMatrix& scores, std::span<const std::uint32_t> token_counts,
                                     std::size_t k) {
  check_inputs(scores, token_counts);
  if (k < 1 || k > scores.cols) {
    throw ConfigError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.cols) + "]");
  }
  SelectionResult out;
  std::vector<std::uint32_t> order(scores.cols);
  for (std::size_t i = 0; i < scores.rows; ++i) {
    const auto raw = scores.row(i);
    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        if (raw[a] != raw[b]) return raw[a] > raw[b];
                        return a < b;
                      });
    RowSelection r;
    r.clusters.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::uint32_t j : r.clusters) r.acc += std::max(raw[j], 0.0) * token_counts[j];
    out.rows.push_back(std::move(r));
  }
  finish_union(out, scores.cols);
  return out;
}

void map_to_tokens(SelectionResult& selection, const HcTable& table) {
  selection.union_token_ids.clear();
  for (std::uint32_t c : selection.union_cluster_ids) {
    const HcEntry& e = table.entry(c);
    selection.union_token_ids.insert(selection.union_token_ids.end(), e.token_ids.begin(), e.token_ids.end());
  }
  std::sort(selection.union_token_ids.begin(), selection.union_token_ids.end());
  selection.union_token_ids.erase(std::unique(selection.union_token_ids.begin(), selection.union_token_ids.end()),
                                  selection.union_token_ids.end());
  const std::uint32_t total = table.next_token_id();
  selection.retrieval_ratio =
      total == 0 ? 0.0 : static_cast<double>(selection.union_token_ids.size()) / static_cast<double>(total);
}

std::vector<std::uint32_t> sorted_clusters(const RowSelection& row) {
  std::vector<std::uint32_t> v = row.clusters;
  std::sort(v.begin(), v.end());
  return v;
}

void write_selection_csv_header(std::ostream& os) {
  os << "layer,head,row,selected_clusters,acc,threshold,ratio\n";
}

void write_selection_csv_rows(std::ostream& os, std::size_t layer, std::size_t head,
                              const SelectionResult& sel, const HcTable& table) {
  const double total = static_cast<double>(table.next_token_id());
  for (std::size_t i = 0; i < sel.rows.size(); ++i) {
    const auto ids = sorted_clusters(sel.rows[i]);
    std::size_t tokens = 0;
    os << layer << ',' << head << ',' << i << ',';
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (k) os << '|';
      os << ids[k];
      tokens += table.entry(ids[k]).token_count;
    }
    os << ',' << fmt_double(sel.rows[i].acc) << ',' << fmt_double(sel.rows[i].threshold) << ','
       << fmt_double(total > 0 ? static_cast<double>(tokens) / total : 0.0) << '\n';
  }
}

}  // namespace streamkv
