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

#include "streamkv/cli.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "streamkv/csv.h"
#include "streamkv/errors.h"

namespace streamkv {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config parsing

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) field_error(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      field_error(join_path(path, key), "unknown field");
    }
  }
}

void read(const json& j, const std::string& path, const char* key, double& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) field_error(join_path(path, key), "expected a number");
  dst = v.get<double>();
  if (!std::isfinite(dst)) field_error(join_path(path, key), "expected a finite number");
}

void read(const json& j, const std::string& path, const char* key, bool& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean()) field_error(join_path(path, key), "expected true or false");
  dst = v.get<bool>();
}

void read(const json& j, const std::string& path, const char* key, std::string& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_string()) field_error(join_path(path, key), "expected a string");
  dst = v.get<std::string>();
}

template <typename T>
  requires std::is_unsigned_v<T>
void read(const json& j, const std::string& path, const char* key, T& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    field_error(join_path(path, key), "expected a non-negative integer");
  }
  const auto raw = v.get<std::uint64_t>();
  if (raw > std::numeric_limits<T>::max()) field_error(join_path(path, key), "value out of range");
  dst = static_cast<T>(raw);
}

std::vector<double> read_number_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) field_error(path, "expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) field_error(path, "expected a non-empty array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

void check_integral(double v, const std::string& what) {
  if (!(v >= 0) || std::floor(v) != v) throw ConfigError(what + " value " + fmt_double(v) + " is not a non-negative integer");
}

// ---------------------------------------------------------------------------
// output handling

// Files are staged in memory and only appear in the output directory once
// every one of them has been written and renamed.
class OutputSet {
 public:
  void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

  void commit(const fs::path& dir) {
    const bool existed = fs::exists(dir);
    std::vector<fs::path> staged;
    std::vector<fs::path> placed;
    try {
      fs::create_directories(dir);
      for (const auto& [name, content] : files_) {
        const fs::path tmp = dir / ("." + name + ".tmp");
        staged.push_back(tmp);
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.close();
        if (!os) throw Error("write failed: " + tmp.string());
      }
      for (std::size_t i = 0; i < files_.size(); ++i) {
        const fs::path dst = dir / files_[i].first;
        fs::rename(staged[i], dst);
        placed.push_back(dst);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& p : staged) fs::remove(p, ec);
      for (const auto& p : placed) fs::remove(p, ec);
      if (!existed) fs::remove(dir, ec);  // only succeeds when empty
      throw;
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

template <typename Fn>
std::string to_string_with(Fn fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

// ---------------------------------------------------------------------------
// commands

KvTrace load_trace(const RunConfig& cfg) {
  if (cfg.trace_path) return read_trace(*cfg.trace_path);
  return generate_synthetic_trace(cfg.synth);
}

json dims_json(const TraceDims& d) {
  return {{"num_layers", d.num_layers},
          {"num_heads", d.num_heads},
          {"head_dim", d.head_dim},
          {"tokens_per_frame", d.tokens_per_frame},
          {"num_frames", d.num_frames}};
}

json retrieval_json(const RetrievalResult& r) {
  double recall = 0.0;
  double base_recall = 0.0;
  double cosine = 0.0;
  double clusters = 0.0;
  double overhead = 0.0;
  std::size_t wins = 0;
  for (const auto& s : r.slices) {
    recall += s.quality.attention_mass_recall;
    base_recall += s.baseline_quality.attention_mass_recall;
    cosine += s.quality.output_cosine;
    clusters += static_cast<double>(s.clusters.num_clusters);
    overhead += s.clusters.hc_overhead_ratio;
    if (s.quality.attention_mass_recall >= s.baseline_quality.attention_mass_recall) ++wins;
  }
  const double n = std::max<double>(1.0, static_cast<double>(r.slices.size()));
  const FetchSummary f = r.fetch_summary(4096);
  return {{"slices", r.slices.size()},
          {"retrieval_ratio", r.mean_ratio()},
          {"recall", recall / n},
          {"output_cosine", cosine / n},
          {"baseline_recall", base_recall / n},
          {"slices_recall_ge_baseline", wins},
          {"mean_clusters", clusters / n},
          {"hc_overhead_ratio", overhead / n},
          {"layer_ratios", r.layer_ratios()},
          {"coalesced_amplification", f.coalesced_amplification.value_or(1.0)},
          {"per_token_amplification", f.per_token_amplification.value_or(1.0)}};
}

void add_retrieval_files(OutputSet& out, const RetrievalResult& r) {
  out.add("selection.csv", to_string_with([&](std::ostream& os) {
            write_selection_csv_header(os);
            for (const auto& s : r.slices) write_selection_csv_rows(os, s.layer, s.head, s.selection, *s.table);
          }));
  out.add("quality.csv", to_string_with([&](std::ostream& os) {
            write_quality_csv_header(os);
            for (const auto& s : r.slices) write_quality_csv_row(os, s.layer, s.head, s.quality);
          }));
  out.add("baseline.csv", to_string_with([&](std::ostream& os) {
            os << "layer,head,k,tokens,ratio,recall,output_cosine\n";
            for (const auto& s : r.slices) {
              os << s.layer << ',' << s.head << ',' << s.baseline_k << ',' << s.baseline_tokens << ','
                 << fmt_double(s.baseline_quality.retrieval_ratio) << ','
                 << fmt_double(s.baseline_quality.attention_mass_recall) << ','
                 << fmt_double(s.baseline_quality.output_cosine) << '\n';
            }
          }));
  out.add("hc_table.csv", to_string_with([&](std::ostream& os) {
            write_hc_csv_header(os);
            for (const auto& s : r.slices) write_hc_csv_rows(os, s.layer, s.head, *s.table);
          }));
  out.add("fetch.csv", to_string_with([&](std::ostream& os) {
            os << "layer,head,layout,ranges,transactions,bytes_requested,bytes_transferred\n";
            for (const auto& s : r.slices) {
              const std::pair<const char*, const FetchTotals*> rows[] = {
                  {"coalesced", &s.coalesced}, {"per_token", &s.per_token}, {"arrival", &s.arrival}};
              for (const auto& [name, t] : rows) {
                os << s.layer << ',' << s.head << ',' << name << ',' << t->ranges << ',' << t->transactions << ','
                   << t->bytes_requested << ',' << t->bytes_transferred << '\n';
              }
            }
          }));
}

// Workload for the simulator, with measured selection and fetch stats when
// the config names a trace source.
WorkloadSpec simulation_workload(const RunConfig& cfg, const RetrievalResult* measured) {
  WorkloadSpec wl = cfg.workload;
  wl.n_hp = cfg.retrieval.n_hp;
  if (measured) {
    const double generation = wl.selection.generation_ratio;
    wl.selection = measured->selection_summary(wl.model.layers);
    wl.selection.generation_ratio = generation;
    wl.fetch = measured->fetch_summary(cfg.retrieval.tiers.transfer_granularity);
  }
  if (cfg.layer_ratio) wl.selection.layer_ratio = *cfg.layer_ratio;
  return wl;
}

struct SimBundle {
  SimReport frame;
  SimReport token;
  SimReport e2e;
  std::vector<AblationPoint> ablation;
};

SimBundle simulate(const RunConfig& cfg, const WorkloadSpec& wl) {
  SimBundle b;
  b.frame = sim_prefill_frame(cfg.hw, wl, cfg.sim);
  b.token = sim_generation_token(cfg.hw, wl, cfg.sim);
  b.e2e = sim_e2e(cfg.hw, cfg.scenario, wl, cfg.sim);
  b.ablation = ablation_report(cfg.hw, wl, cfg.sim);
  return b;
}

void cmd_gen_trace(const RunConfig& cfg, OutputSet& out, json& summary) {
  if (cfg.trace_path) throw ConfigError("gen-trace generates from 'synth'; drop 'trace_path'");
  const KvTrace trace = generate_synthetic_trace(cfg.synth);
  const auto bytes = serialize_trace(trace);
  out.add("trace.bin", std::string(bytes.begin(), bytes.end()));
  const SimilarityGrid grid = adjacent_similarity_stats(trace, 0, 0);
  out.add("similarity.csv", to_string_with([&](std::ostream& os) { write_similarity_csv(os, grid); }));
  summary["command"] = "gen-trace";
  summary["dims"] = dims_json(trace.dims());
  summary["rho"] = cfg.synth.rho;
  summary["seed"] = cfg.synth.seed;
  summary["bytes"] = bytes.size();
  summary["mean_adjacent_key_cosine"] = grid.mean();
}

void cmd_retrieve(const RunConfig& cfg, OutputSet& out, json& summary) {
  const KvTrace trace = load_trace(cfg);
  const RetrievalResult r = run_retrieval(trace, cfg.retrieval);
  add_retrieval_files(out, r);
  summary["command"] = "retrieve";
  summary["dims"] = dims_json(trace.dims());
  summary["params"] = {{"n_hp", cfg.retrieval.n_hp},
                       {"th_hp", cfg.retrieval.th_hp},
                       {"th_r_wics", cfg.retrieval.wicsum.th_r_wics},
                       {"hash_seed", cfg.retrieval.hash_seed}};
  summary["retrieval"] = retrieval_json(r);
}

json sim_json(const RunConfig& cfg, const WorkloadSpec& wl, const SimBundle& b) {
  json abl = json::array();
  for (const auto& p : b.ablation) {
    abl.push_back({{"name", p.name}, {"latency_s", p.report.latency}, {"speedup", p.speedup},
                   {"prediction_share", p.prediction_share}});
  }
  return {{"preset", cfg.hw.name},
          {"cache_len", wl.cache_len},
          {"layer_ratio", wl.selection.layer_ratio},
          {"generation_ratio", wl.selection.generation_ratio},
          {"examined_fraction", wl.selection.examined_fraction},
          {"frame_latency_s", b.frame.latency},
          {"tpot_s", b.token.latency},
          {"exposed_prediction_share", b.frame.exposed_prediction_share()},
          {"exposed_fetch_s", b.frame.exposed_fetch},
          {"frame_energy_j", b.frame.energy.total()},
          {"e2e_s", b.e2e.latency},
          {"e2e_prefill_s", b.e2e.prefill_seconds},
          {"e2e_question_s", b.e2e.question_seconds},
          {"e2e_generation_s", b.e2e.generation_seconds},
          {"e2e_energy_j", b.e2e.energy.total()},
          {"ablation", abl}};
}

void cmd_simulate(const RunConfig& cfg, OutputSet& out, json& summary) {
  std::optional<RetrievalResult> measured;
  if (cfg.has_trace_source) measured = run_retrieval(load_trace(cfg), cfg.retrieval);
  const WorkloadSpec wl = simulation_workload(cfg, measured ? &*measured : nullptr);
  const SimBundle b = simulate(cfg, wl);
  out.add("report.csv", to_string_with([&](std::ostream& os) { write_report_csv(os, b.frame); }));
  out.add("generation.csv", to_string_with([&](std::ostream& os) { write_report_csv(os, b.token); }));
  out.add("timeline.csv",
          to_string_with([&](std::ostream& os) { write_timeline_csv(os, bandwidth_timeline(cfg.hw, b.frame)); }));
  out.add("roofline.csv", to_string_with([&](std::ostream& os) { write_roofline_csv(os, b.frame); }));
  out.add("ablation.csv", to_string_with([&](std::ostream& os) {
            os << "name,kvpu_offload,kvmu_coalescing,overlap,latency_s,speedup,prediction_share\n";
            for (const auto& p : b.ablation) {
              os << p.name << ',' << p.options.kvpu_offload << ',' << p.options.kvmu_coalescing << ','
                 << p.options.overlap << ',' << fmt_double(p.report.latency) << ',' << fmt_double(p.speedup) << ','
                 << fmt_double(p.prediction_share) << '\n';
            }
          }));
  summary["command"] = "simulate";
  summary["measured"] = measured.has_value();
  summary["simulation"] = sim_json(cfg, wl, b);
  if (measured) summary["retrieval"] = retrieval_json(*measured);
}

struct SweepPoint {
  double value = 0.0;
  std::string rows;
  json summary;
};

RunConfig point_config(const RunConfig& base, SweepAxis axis, double v) {
  RunConfig c = base;
  switch (axis) {
    case SweepAxis::kCacheLen:
      check_integral(v, "cache_len");
      c.workload.cache_len = static_cast<std::uint64_t>(v);
      break;
    case SweepAxis::kThRWics:
      c.retrieval.wicsum.th_r_wics = v;
      break;
    case SweepAxis::kThHp:
      check_integral(v, "th_hp");
      c.retrieval.th_hp = static_cast<std::uint32_t>(v);
      break;
    case SweepAxis::kNHp:
      check_integral(v, "n_hp");
      c.retrieval.n_hp = static_cast<std::uint32_t>(v);
      break;
    case SweepAxis::kRho:
      if (c.trace_path) throw ConfigError("rho sweeps need a synthetic trace, not 'trace_path'");
      c.synth.rho = v;
      break;
  }
  c.retrieval.validate();
  c.synth.validate();
  return c;
}

SweepPoint run_point(const RunConfig& c, double value, const KvTrace* shared_trace,
                     const RetrievalResult* shared_result, SweepAxis axis) {
  std::optional<KvTrace> own_trace;
  if (!shared_trace) own_trace = load_trace(c);
  const KvTrace& trace = shared_trace ? *shared_trace : *own_trace;
  std::optional<RetrievalResult> own;
  if (!shared_result) own = run_retrieval(trace, c.retrieval);
  const RetrievalResult& r = shared_result ? *shared_result : *own;
  const WorkloadSpec wl = simulation_workload(c, &r);
  const SimReport frame = sim_prefill_frame(c.hw, wl, c.sim);
  const SimReport token = sim_generation_token(c.hw, wl, c.sim);

  SweepPoint p;
  p.value = value;
  std::ostringstream os;
  for (const auto& s : r.slices) {
    os << sweep_axis_name(axis) << ',' << fmt_double(value) << ',' << s.layer << ',' << s.head << ','
       << fmt_double(s.selection.retrieval_ratio) << ',' << fmt_double(s.quality.attention_mass_recall) << ','
       << fmt_double(s.quality.output_cosine) << ',' << s.clusters.num_clusters << ','
       << fmt_double(s.examined_fraction) << ',' << fmt_double(frame.latency) << ',' << fmt_double(token.latency)
       << '\n';
  }
  p.rows = os.str();
  p.summary = {{"value", value},
               {"retrieval_ratio", r.mean_ratio()},
               {"recall", r.mean_recall()},
               {"frame_latency_s", frame.latency},
               {"tpot_s", token.latency}};
  return p;
}

void cmd_sweep(const RunConfig& cfg, OutputSet& out, json& summary) {
  const SweepAxis axis = cfg.sweep_axis;
  std::optional<KvTrace> shared_trace;
  if (axis != SweepAxis::kRho) shared_trace = load_trace(cfg);
  std::optional<RetrievalResult> shared_result;
  if (axis == SweepAxis::kCacheLen) shared_result = run_retrieval(*shared_trace, cfg.retrieval);

  std::vector<RunConfig> configs;
  for (double v : cfg.sweep_values) {
    configs.push_back(point_config(cfg, axis, v));
    configs.back().retrieval.threads = 1;  // points already run in parallel
  }
  std::vector<std::future<SweepPoint>> jobs;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&, i] {
      return run_point(configs[i], cfg.sweep_values[i], shared_trace ? &*shared_trace : nullptr,
                       shared_result ? &*shared_result : nullptr, axis);
    }));
  }
  std::vector<SweepPoint> points;
  std::exception_ptr first_error;
  for (auto& j : jobs) {
    try {
      points.push_back(j.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  std::string csv =
      "axis,value,layer,head,ratio,recall,output_cosine,clusters,examined_fraction,frame_latency_s,tpot_s\n";
  json pts = json::array();
  for (const auto& p : points) {
    csv += p.rows;
    pts.push_back(p.summary);
  }
  out.add("sweep.csv", std::move(csv));
  summary["command"] = "sweep";
  summary["axis"] = sweep_axis_name(axis);
  summary["points"] = pts;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, join_path(prefix, k), rows);
  } else if (j.is_array() && !j.empty() && j.front().is_object()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", rows);
  } else if (j.is_number_float()) {
    rows.emplace_back(prefix, fmt_double(j.get<double>()));
  } else if (j.is_string()) {
    rows.emplace_back(prefix, j.get<std::string>());
  } else {
    rows.emplace_back(prefix, j.dump());
  }
}

void print_summary(std::ostream& os, const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw Error("cannot open " + file.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> rows;
  flatten(j, "", rows);
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  os << "== " << file.parent_path().filename().string() << " ==\n";
  for (const auto& [k, v] : rows) os << std::left << std::setw(static_cast<int>(width) + 2) << k << v << '\n';
}

void cmd_report(const fs::path& dir, std::ostream& os) {
  if (!fs::is_directory(dir)) throw Error("run directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  if (fs::exists(dir / "summary.json")) files.push_back(dir / "summary.json");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "summary.json")) subdirs.push_back(e.path() / "summary.json");
  }
  std::sort(subdirs.begin(), subdirs.end());
  files.insert(files.end(), subdirs.begin(), subdirs.end());
  if (files.empty()) throw Error("no summary.json under " + dir.string());
  for (const auto& f : files) print_summary(os, f);
}

}  // namespace

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "cache_len") return SweepAxis::kCacheLen;
  if (name == "th_r_wics") return SweepAxis::kThRWics;
  if (name == "th_hp") return SweepAxis::kThHp;
  if (name == "n_hp") return SweepAxis::kNHp;
  if (name == "rho") return SweepAxis::kRho;
  throw ConfigError("unknown sweep axis '" + name + "' (expected cache_len, th_r_wics, th_hp, n_hp or rho)");
}

const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kCacheLen:
      return "cache_len";
    case SweepAxis::kThRWics:
      return "th_r_wics";
    case SweepAxis::kThHp:
      return "th_hp";
    case SweepAxis::kNHp:
      return "n_hp";
    case SweepAxis::kRho:
      return "rho";
  }
  return "?";
}

void resolve_hardware(RunConfig& cfg) {
  HwConfig hw = hw_preset(cfg.preset);
  for (const auto& [key, v] : cfg.hw_overrides) {
    auto as_count = [&](std::uint32_t& dst) {
      check_integral(v, "hw." + key);
      dst = static_cast<std::uint32_t>(v);
    };
    if (key == "cores") {
      as_count(hw.cores);
    } else if (key == "clock_hz") {
      hw.clock_hz = v;
    } else if (key == "dram_bandwidth") {
      hw.dram_bandwidth = v;
    } else if (key == "link_bandwidth") {
      hw.link_bandwidth = v;
    } else if (key == "device_kv_capacity") {
      check_integral(v, "hw.device_kv_capacity");
      hw.device_kv_capacity = static_cast<std::uint64_t>(v);
    } else if (key == "link_lanes") {
      as_count(hw.power.link_lanes);
    }
  }
  hw.validate();
  cfg.hw = hw;
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  RunConfig c;
  check_keys(j, "", {"trace_path", "synth", "hash", "cluster", "wicsum", "tiers", "hw", "workload", "sim",
                     "scenario", "sweep", "threads"});
  read(j, "", "threads", c.retrieval.threads);
  if (j.contains("trace_path")) {
    std::string p;
    read(j, "", "trace_path", p);
    c.trace_path = p;
    c.has_trace_source = true;
  }
  if (j.contains("synth")) {
    if (c.trace_path) throw ConfigError("config fields 'trace_path' and 'synth' are mutually exclusive");
    const json& s = j["synth"];
    check_keys(s, "synth", {"num_layers", "num_heads", "head_dim", "tokens_per_frame", "num_frames", "rho", "seed"});
    auto& d = c.synth.dims;
    read(s, "synth", "num_layers", d.num_layers);
    read(s, "synth", "num_heads", d.num_heads);
    read(s, "synth", "head_dim", d.head_dim);
    read(s, "synth", "tokens_per_frame", d.tokens_per_frame);
    read(s, "synth", "num_frames", d.num_frames);
    read(s, "synth", "rho", c.synth.rho);
    read(s, "synth", "seed", c.synth.seed);
    c.has_trace_source = true;
  }
  if (j.contains("hash")) {
    const json& s = j["hash"];
    check_keys(s, "hash", {"n_hp", "seed"});
    read(s, "hash", "n_hp", c.retrieval.n_hp);
    read(s, "hash", "seed", c.retrieval.hash_seed);
  }
  if (j.contains("cluster")) {
    const json& s = j["cluster"];
    check_keys(s, "cluster", {"th_hp"});
    read(s, "cluster", "th_hp", c.retrieval.th_hp);
  }
  if (j.contains("wicsum")) {
    const json& s = j["wicsum"];
    check_keys(s, "wicsum", {"th_r_wics", "bucket_count", "refine_limit", "scaled"});
    read(s, "wicsum", "th_r_wics", c.retrieval.wicsum.th_r_wics);
    read(s, "wicsum", "bucket_count", c.retrieval.wicsum.bucket_count);
    read(s, "wicsum", "refine_limit", c.retrieval.wicsum.refine_limit);
    read(s, "wicsum", "scaled", c.retrieval.scaled_scores);
  }
  if (j.contains("tiers")) {
    const json& s = j["tiers"];
    check_keys(s, "tiers",
               {"device_frames", "device_capacity", "host_capacity", "link_bandwidth", "transfer_granularity"});
    auto& t = c.retrieval.tiers;
    if (s.contains("device_frames") && s.contains("device_capacity")) {
      throw ConfigError("config fields 'tiers.device_frames' and 'tiers.device_capacity' are mutually exclusive");
    }
    if (s.contains("device_frames")) {
      std::uint32_t n = 0;
      read(s, "tiers", "device_frames", n);
      c.retrieval.device_frames = n;
    }
    if (s.contains("device_capacity")) {
      read(s, "tiers", "device_capacity", t.device_capacity);
      c.retrieval.device_frames.reset();
    }
    read(s, "tiers", "host_capacity", t.host_capacity);
    read(s, "tiers", "link_bandwidth", t.link_bandwidth);
    read(s, "tiers", "transfer_granularity", t.transfer_granularity);
  }
  if (j.contains("hw")) {
    const json& s = j["hw"];
    check_keys(s, "hw", {"preset", "cores", "clock_hz", "dram_bandwidth", "link_bandwidth", "device_kv_capacity",
                         "link_lanes"});
    read(s, "hw", "preset", c.preset);
    for (const char* key : {"cores", "clock_hz", "dram_bandwidth", "link_bandwidth", "device_kv_capacity", "link_lanes"}) {
      if (!s.contains(key)) continue;
      double v = 0.0;
      read(s, "hw", key, v);
      c.hw_overrides.emplace_back(key, v);
    }
  }
  if (j.contains("workload")) {
    const json& s = j["workload"];
    check_keys(s, "workload", {"cache_len", "frame_tokens", "batch", "layer_ratio", "generation_ratio",
                               "examined_fraction", "tokens_per_cluster"});
    auto& w = c.workload;
    read(s, "workload", "cache_len", w.cache_len);
    read(s, "workload", "frame_tokens", w.frame_tokens);
    read(s, "workload", "batch", w.batch);
    read(s, "workload", "generation_ratio", w.selection.generation_ratio);
    read(s, "workload", "examined_fraction", w.selection.examined_fraction);
    read(s, "workload", "tokens_per_cluster", w.selection.tokens_per_cluster);
    if (s.contains("layer_ratio")) {
      const json& v = s["layer_ratio"];
      c.layer_ratio = v.is_number() ? std::vector<double>{v.get<double>()}
                                    : read_number_list(v, "workload.layer_ratio");
    }
  }
  if (j.contains("sim")) {
    const json& s = j["sim"];
    check_keys(s, "sim", {"kvpu_offload", "kvmu_coalescing", "overlap"});
    read(s, "sim", "kvpu_offload", c.sim.kvpu_offload);
    read(s, "sim", "kvmu_coalescing", c.sim.kvmu_coalescing);
    read(s, "sim", "overlap", c.sim.overlap);
  }
  if (j.contains("scenario")) {
    const json& s = j["scenario"];
    check_keys(s, "scenario", {"frames", "question_tokens", "answer_tokens"});
    read(s, "scenario", "frames", c.scenario.frames);
    read(s, "scenario", "question_tokens", c.scenario.question_tokens);
    read(s, "scenario", "answer_tokens", c.scenario.answer_tokens);
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, "sweep", {"axis", "values"});
    std::string axis = sweep_axis_name(c.sweep_axis);
    read(s, "sweep", "axis", axis);
    c.sweep_axis = parse_sweep_axis(axis);
    if (s.contains("values")) c.sweep_values = read_number_list(s["values"], "sweep.values");
  }

  c.synth.validate();
  c.retrieval.validate();
  resolve_hardware(c);
  if (c.layer_ratio) c.workload.selection.layer_ratio = *c.layer_ratio;
  c.workload.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"streamkv: KV-cache retrieval and memory model toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string axis;
  std::vector<double> values;
  std::string run_dir;

  auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "JSON run configuration");
    auto* o = sub->add_option("--out", out_dir, "output directory");
    if (needs_out) o->required();
    sub->add_option("--preset", preset, "hardware preset")->check(CLI::IsMember({"edge8", "server48"}));
    sub->add_option("--seed", seed, "seed for trace generation and hashing");
  };
  CLI::App* gen = app.add_subcommand("gen-trace", "write a synthetic trace");
  CLI::App* ret = app.add_subcommand("retrieve", "cluster, select and score a trace");
  CLI::App* sim = app.add_subcommand("simulate", "run the performance model");
  CLI::App* swp = app.add_subcommand("sweep", "sweep one parameter");
  CLI::App* rep = app.add_subcommand("report", "summarize a run directory");
  for (CLI::App* s : {gen, ret, sim, swp}) common(s, true);
  swp->add_option("--axis", axis, "cache_len, th_r_wics, th_hp, n_hp or rho");
  swp->add_option("--values", values, "sweep points")->delimiter(',');
  rep->add_option("dir", run_dir, "run directory");
  rep->add_option("--out", out_dir, "run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (rep->parsed()) {
      const std::string dir = run_dir.empty() ? out_dir : run_dir;
      if (dir.empty()) throw ConfigError("report needs a run directory");
      cmd_report(dir, out);
      return 0;
    }

    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (!preset.empty()) {
      cfg.preset = preset;
      resolve_hardware(cfg);
    }
    if (seed) {
      cfg.synth.seed = *seed;
      cfg.retrieval.hash_seed = *seed;
    }
    if (!axis.empty()) cfg.sweep_axis = parse_sweep_axis(axis);
    if (!values.empty()) cfg.sweep_values = values;

    OutputSet files;
    json summary;
    if (gen->parsed()) cmd_gen_trace(cfg, files, summary);
    if (ret->parsed()) cmd_retrieve(cfg, files, summary);
    if (sim->parsed()) cmd_simulate(cfg, files, summary);
    if (swp->parsed()) cmd_sweep(cfg, files, summary);
    files.add("summary.json", summary.dump(2) + "\n");
    files.commit(out_dir);
    out << "wrote " << out_dir << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace streamkv
