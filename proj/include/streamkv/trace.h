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
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "streamkv/matrix.h"

namespace streamkv {

// On-disk layout (all little-endian, fields in this order):
//
//   char[8]  magic            "VREXTRC1"
//   u32      version          kTraceVersion
//   u32      num_layers
//   u32      num_heads
//   u32      head_dim
//   u32      tokens_per_frame
//   u32      num_frames
//   u32      element_type     0 = float32
//   u64      seed             generator seed, 0 for recorded traces
//
// followed by the payload: for each frame, for each layer, for each head,
// the Q, K and V matrices (tokens_per_frame x head_dim, row-major).
inline constexpr std::array<char, 8> kTraceMagic = {'V', 'R', 'E', 'X', 'T', 'R', 'C', '1'};
inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 8 + 4 * 7 + 8;

enum class ElementType : std::uint32_t { kFloat32LE = 0 };

struct TraceDims {
  std::uint32_t num_layers = 1;
  std::uint32_t num_heads = 1;
  std::uint32_t head_dim = 64;
  std::uint32_t tokens_per_frame = 16;
  std::uint32_t num_frames = 8;

  // Throws ConfigError naming the first zero field.
  void validate() const;
  std::size_t heads_per_frame() const { return std::size_t{num_layers} * num_heads; }
  bool operator==(const TraceDims&) const = default;
};

struct TraceHeader {
  std::uint32_t version = kTraceVersion;
  TraceDims dims;
  ElementType element_type = ElementType::kFloat32LE;
  std::uint64_t seed = 0;

  std::uint64_t payload_bytes() const;
  bool operator==(const TraceHeader&) const = default;
};

struct HeadTensors {
  Matrix query;
  Matrix key;
  Matrix value;
  bool operator==(const HeadTensors&) const = default;
};

// One frame of prefill activations, (layer, head) slices in layer-major order.
struct FrameTensors {
  std::vector<HeadTensors> heads;
  bool operator==(const FrameTensors&) const = default;
};

class KvTrace {
 public:
  KvTrace() = default;
  KvTrace(TraceHeader header, std::vector<FrameTensors> frames);

  const TraceHeader& header() const { return header_; }
  const TraceDims& dims() const { return header_.dims; }
  const std::vector<FrameTensors>& frames() const { return frames_; }

  const HeadTensors& at(std::size_t frame, std::size_t layer, std::size_t head) const;

  // Rows of `frames_[begin..end)` for one (layer, head), stacked in arrival order.
  Matrix stacked_keys(std::size_t layer, std::size_t head, std::size_t begin, std::size_t end) const;
  Matrix stacked_values(std::size_t layer, std::size_t head, std::size_t begin, std::size_t end) const;

  bool operator==(const KvTrace&) const = default;

 private:
  TraceHeader header_;
  std::vector<FrameTensors> frames_;
};

struct SynthConfig {
  TraceDims dims;
  double rho = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

// Each token slot evolves as an AR(1) process across frames:
//   x_0 = e_0,  x_t = rho * x_{t-1} + sqrt(1 - rho^2) * e_t,  e_t ~ N(0, I)
// independently for Q, K and V and for every (layer, head, slot).
KvTrace generate_synthetic_trace(const SynthConfig& cfg);

std::vector<std::uint8_t> serialize_trace(const KvTrace& trace);
KvTrace deserialize_trace(std::span<const std::uint8_t> bytes);

void write_trace(const KvTrace& trace, const std::filesystem::path& path);
KvTrace read_trace(const std::filesystem::path& path);

// Cosine similarity of each key slot between frame t and t+1.
// Row t holds the transitions t -> t+1; empty for single-frame traces.
struct SimilarityGrid {
  std::size_t transitions = 0;
  std::size_t slots = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t slot) const { return values[t * slots + slot]; }
  double mean() const;
};

SimilarityGrid adjacent_similarity_stats(const KvTrace& trace, std::size_t layer, std::size_t head);

// Header `frame,slot,cos_sim`; `frame` is the earlier frame of the pair.
void write_similarity_csv(std::ostream& os, const SimilarityGrid& grid);

}  // namespace streamkv
