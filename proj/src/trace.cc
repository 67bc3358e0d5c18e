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

#include "streamkv/trace.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>
#include <string>

#include "streamkv/csv.h"
#include "streamkv/errors.h"

namespace streamkv {
namespace {

constexpr int kTensorKinds = 3;  // Q, K, V

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  void raw(std::span<char> dst, const char* field) {
    need(dst.size(), field);
    std::memcpy(dst.data(), bytes_.data() + pos_, dst.size());
    pos_ += dst.size();
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("trace truncated while reading ") + field);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Matrix stack(const KvTrace& trace, std::size_t layer, std::size_t head, std::size_t begin,
             std::size_t end, Matrix HeadTensors::*member) {
  const auto& d = trace.dims();
  if (layer >= d.num_layers || head >= d.num_heads) {
    throw ShapeError("layer/head out of range");
  }
  end = std::min<std::size_t>(end, d.num_frames);
  Matrix out(0, d.head_dim);
  for (std::size_t f = begin; f < end; ++f) out.append_rows(trace.at(f, layer, head).*member);
  return out;
}

}  // namespace

void TraceDims::validate() const {
  auto check = [](std::uint32_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be >= 1");
  };
  check(num_layers, "num_layers");
  check(num_heads, "num_heads");
  check(head_dim, "head_dim");
  check(tokens_per_frame, "tokens_per_frame");
  check(num_frames, "num_frames");
}

std::uint64_t TraceHeader::payload_bytes() const {
  return std::uint64_t{dims.num_frames} * dims.num_layers * dims.num_heads * dims.tokens_per_frame *
         dims.head_dim * sizeof(float) * kTensorKinds;
}

KvTrace::KvTrace(TraceHeader header, std::vector<FrameTensors> frames)
    : header_(header), frames_(std::move(frames)) {
  header_.dims.validate();
  if (frames_.size() != header_.dims.num_frames) {
    throw ShapeError("frame count does not match header");
  }
  for (const auto& f : frames_) {
    if (f.heads.size() != header_.dims.heads_per_frame()) throw ShapeError("head count mismatch");
    for (const auto& h : f.heads) {
      for (const Matrix* m : {&h.query, &h.key, &h.value}) {
        if (m->rows() != header_.dims.tokens_per_frame || m->cols() != header_.dims.head_dim) {
          throw ShapeError("tensor shape does not match header");
        }
      }
    }
  }
}

const HeadTensors& KvTrace::at(std::size_t frame, std::size_t layer, std::size_t head) const {
  return frames_.at(frame).heads.at(layer * header_.dims.num_heads + head);
}

Matrix KvTrace::stacked_keys(std::size_t layer, std::size_t head, std::size_t begin,
                             std::size_t end) const {
  return stack(*this, layer, head, begin, end, &HeadTensors::key);
}

Matrix KvTrace::stacked_values(std::size_t layer, std::size_t head, std::size_t begin,
                               std::size_t end) const {
  return stack(*this, layer, head, begin, end, &HeadTensors::value);
}

void SynthConfig::validate() const {
  dims.validate();
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
}

KvTrace generate_synthetic_trace(const SynthConfig& cfg) {
  cfg.validate();
  const auto& d = cfg.dims;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innovation = std::sqrt(1.0 - cfg.rho * cfg.rho);

  std::vector<FrameTensors> frames(d.num_frames);
  for (std::uint32_t f = 0; f < d.num_frames; ++f) {
    frames[f].heads.resize(d.heads_per_frame());
    for (std::size_t s = 0; s < d.heads_per_frame(); ++s) {
      HeadTensors& cur = frames[f].heads[s];
      for (Matrix HeadTensors::*member : {&HeadTensors::query, &HeadTensors::key, &HeadTensors::value}) {
        Matrix m(d.tokens_per_frame, d.head_dim);
        for (float& x : m.data()) x = static_cast<float>(normal(rng));
        if (f > 0) {
          const Matrix& prev = frames[f - 1].heads[s].*member;
          auto dst = m.data();
          auto src = prev.data();
          for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<float>(cfg.rho * src[i] + innovation * dst[i]);
          }
        }
        cur.*member = std::move(m);
      }
    }
  }
  TraceHeader header;
  header.dims = d;
  header.seed = cfg.seed;
  return KvTrace(header, std::move(frames));
}

std::vector<std::uint8_t> serialize_trace(const KvTrace& trace) {
  const TraceHeader& h = trace.header();
  std::vector<std::uint8_t> out;
  out.reserve(kTraceHeaderBytes + h.payload_bytes());
  for (char c : kTraceMagic) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, h.version);
  put_u32(out, h.dims.num_layers);
  put_u32(out, h.dims.num_heads);
  put_u32(out, h.dims.head_dim);
  put_u32(out, h.dims.tokens_per_frame);
  put_u32(out, h.dims.num_frames);
  put_u32(out, static_cast<std::uint32_t>(h.element_type));
  put_u64(out, h.seed);
  for (const auto& frame : trace.frames()) {
    for (const auto& head : frame.heads) {
      for (const Matrix* m : {&head.query, &head.key, &head.value}) {
        for (float x : m->data()) put_u32(out, std::bit_cast<std::uint32_t>(x));
      }
    }
  }
  return out;
}

KvTrace deserialize_trace(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  std::array<char, 8> magic{};
  in.raw(magic, "magic");
  if (magic != kTraceMagic) throw FormatError("bad magic: expected VREXTRC1");

  TraceHeader h;
  h.version = in.u32("version");
  if (h.version != kTraceVersion) {
    throw FormatError("unsupported version " + std::to_string(h.version));
  }
  h.dims.num_layers = in.u32("num_layers");
  h.dims.num_heads = in.u32("num_heads");
  h.dims.head_dim = in.u32("head_dim");
  h.dims.tokens_per_frame = in.u32("tokens_per_frame");
  h.dims.num_frames = in.u32("num_frames");
  const std::uint32_t et = in.u32("element_type");
  if (et != static_cast<std::uint32_t>(ElementType::kFloat32LE)) {
    throw FormatError("unsupported element_type " + std::to_string(et));
  }
  h.seed = in.u64("seed");
  try {
    h.dims.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid header: ") + e.what());
  }

  if (in.remaining() < h.payload_bytes()) {
    throw FormatError("payload truncated: header num_frames=" + std::to_string(h.dims.num_frames) +
                      " requires " + std::to_string(h.payload_bytes()) + " bytes, found " +
                      std::to_string(in.remaining()));
  }
  if (in.remaining() > h.payload_bytes()) {
    throw FormatError("payload longer than header num_frames implies");
  }

  std::vector<FrameTensors> frames(h.dims.num_frames);
  for (auto& frame : frames) {
    frame.heads.resize(h.dims.heads_per_frame());
    for (auto& head : frame.heads) {
      for (Matrix* m : {&head.query, &head.key, &head.value}) {
        *m = Matrix(h.dims.tokens_per_frame, h.dims.head_dim);
        for (float& x : m->data()) {
          x = in.f32("payload");
          if (!std::isfinite(x)) throw FormatError("payload contains a non-finite value");
        }
      }
    }
  }
  return KvTrace(h, std::move(frames));
}

void write_trace(const KvTrace& trace, const std::filesystem::path& path) {
  const auto bytes = serialize_trace(trace);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("write failed: " + path.string());
}

KvTrace read_trace(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_trace(bytes);
}

double SimilarityGrid::mean() const {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

SimilarityGrid adjacent_similarity_stats(const KvTrace& trace, std::size_t layer, std::size_t head) {
  const auto& d = trace.dims();
  if (layer >= d.num_layers || head >= d.num_heads) throw ShapeError("layer/head out of range");
  SimilarityGrid grid;
  grid.slots = d.tokens_per_frame;
  if (d.num_frames < 2) return grid;
  grid.transitions = d.num_frames - 1;
  grid.values.reserve(grid.transitions * grid.slots);
  for (std::size_t t = 0; t + 1 < d.num_frames; ++t) {
    const Matrix& a = trace.at(t, layer, head).key;
    const Matrix& b = trace.at(t + 1, layer, head).key;
    for (std::size_t s = 0; s < grid.slots; ++s) {
      grid.values.push_back(cosine_similarity(a.row(s), b.row(s)));
    }
  }
  return grid;
}

void write_similarity_csv(std::ostream& os, const SimilarityGrid& grid) {
  os << "frame,slot,cos_sim\n";
  for (std::size_t t = 0; t < grid.transitions; ++t) {
    for (std::size_t s = 0; s < grid.slots; ++s) {
      os << t << ',' << s << ',' << fmt_double(grid.at(t, s)) << '\n';
    }
  }
}

}  // namespace streamkv
