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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "streamkv/perfsim.h"
#include "streamkv/pipeline.h"
#include "streamkv/trace.h"

namespace streamkv {

enum class SweepAxis { kCacheLen, kThRWics, kThHp, kNHp, kRho };
SweepAxis parse_sweep_axis(const std::string& name);
const char* sweep_axis_name(SweepAxis a);

struct RunConfig {
  std::optional<std::filesystem::path> trace_path;  // otherwise `synth` is generated
  bool has_trace_source = false;                    // config named a trace or synth block
  SynthConfig synth{TraceDims{4, 4, 64, 32, 16}, 0.9, 1};
  RetrievalParams retrieval;
  std::string preset = "edge8";
  HwConfig hw = edge8_preset();
  // Explicit hardware fields, reapplied after --preset.
  std::vector<std::pair<std::string, double>> hw_overrides;
  WorkloadSpec workload;
  std::optional<std::vector<double>> layer_ratio;  // fixed ratios override measured ones
  SimOptions sim;
  Scenario scenario;
  SweepAxis sweep_axis = SweepAxis::kThRWics;
  std::vector<double> sweep_values = {0.1, 0.3, 0.5};
};

// Parses a JSON document. Unknown fields and type mismatches raise
// ConfigError naming the dotted field path.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Rebuilds `hw` from `preset` and the explicit overrides.
void resolve_hardware(RunConfig& cfg);

// Entry point shared by the executable and the tests. Returns the process
// exit status: 0 ok, 1 configuration error, 2 runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace streamkv
