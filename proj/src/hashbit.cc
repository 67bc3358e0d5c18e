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

#include "streamkv/hashbit.h"

#include <bit>
#include <cstdio>
#include <random>

#include "streamkv/errors.h"

namespace streamkv {
namespace {

template <typename T>
void hash_into(std::span<const T> v, const HyperplaneSet& planes, std::span<std::uint64_t> out) {
  // Accumulate column-wise so every plane sees the same summation order as
  // a scalar dot product over d = 0..dim-1.
  std::vector<double> proj(planes.n_hp, 0.0);
  for (std::size_t d = 0; d < planes.dim; ++d) {
    const double x = static_cast<double>(v[d]);
    auto prow = planes.planes.row(d);
    for (std::size_t j = 0; j < planes.n_hp; ++j) proj[j] += x * static_cast<double>(prow[j]);
  }
  for (std::size_t j = 0; j < planes.n_hp; ++j) {
    if (proj[j] > 0.0) out[j / 64] |= std::uint64_t{1} << (j % 64);
  }
}

void check_width(BitRowView a, BitRowView b) {
  if (a.bits != b.bits) {
    throw ShapeError("hamming: width mismatch " + std::to_string(a.bits) + " vs " + std::to_string(b.bits));
  }
}

}  // namespace

HyperplaneSet make_hyperplanes(std::size_t dim, std::size_t n_hp, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("hyperplane dim must be >= 1");
  if (n_hp == 0) throw ConfigError("n_hp must be >= 1");
  HyperplaneSet hp{dim, n_hp, seed, Matrix(dim, n_hp)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (float& x : hp.planes.data()) x = static_cast<float>(normal(rng));
  return hp;
}

void HashBits::set_row(std::size_t i, BitRowView src) {
  if (src.bits != n_hp_) throw ShapeError("set_row: width mismatch");
  std::copy(src.words.begin(), src.words.end(), words_.begin() + static_cast<std::ptrdiff_t>(i * stride_));
}

void HashBits::append_row(BitRowView src) {
  if (rows_ == 0 && n_hp_ == 0) {
    n_hp_ = src.bits;
    stride_ = words_for_bits(src.bits);
  }
  if (src.bits != n_hp_) throw ShapeError("append_row: width mismatch");
  words_.insert(words_.end(), src.words.begin(), src.words.end());
  ++rows_;
}

HashBits generate_hashbits(const Matrix& keys, const HyperplaneSet& planes) {
  if (keys.cols() != planes.dim) {
    throw ShapeError("generate_hashbits: key dim " + std::to_string(keys.cols()) +
                     " != hyperplane dim " + std::to_string(planes.dim));
  }
  HashBits out(keys.rows(), planes.n_hp);
  std::vector<std::uint64_t> scratch(out.words_per_row());
  for (std::size_t i = 0; i < keys.rows(); ++i) {
    std::fill(scratch.begin(), scratch.end(), 0);
    hash_into(keys.row(i), planes, scratch);
    out.set_row(i, {scratch, planes.n_hp});
  }
  return out;
}

std::vector<std::uint64_t> hash_vector(std::span<const double> v, const HyperplaneSet& planes) {
  if (v.size() != planes.dim) throw ShapeError("hash_vector: dim mismatch");
  std::vector<std::uint64_t> out(words_for_bits(planes.n_hp), 0);
  hash_into(v, planes, out);
  return out;
}

std::uint32_t hamming(BitRowView a, BitRowView b) {
  check_width(a, b);
  std::uint32_t d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

std::vector<std::uint32_t> hamming_row_vs_set(BitRowView row, const HashBits& set) {
  std::vector<std::uint32_t> out;
  if (set.rows() == 0) return out;
  check_width(row, set.row(0));
  out.reserve(set.rows());
  for (std::size_t k = 0; k < set.rows(); ++k) out.push_back(hamming(row, set.row(k)));
  return out;
}

std::string to_hex_lines(const HashBits& bits) {
  std::string out;
  char buf[17];
  for (std::size_t i = 0; i < bits.rows(); ++i) {
    auto r = bits.row(i);
    for (std::size_t w = r.words.size(); w-- > 0;) {
      const std::size_t live = (w + 1 == r.words.size() && r.bits % 64) ? r.bits % 64 : 64;
      const int digits = static_cast<int>((live + 3) / 4);
      std::snprintf(buf, sizeof(buf), "%0*llx", digits, static_cast<unsigned long long>(r.words[w]));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace streamkv
