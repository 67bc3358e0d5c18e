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
#include <span>
#include <string>
#include <vector>

#include "streamkv/matrix.h"

namespace streamkv {

// Random hyperplanes for sign-projection hashing. `planes` is dim x n_hp;
// column j is hyperplane j. Entries are i.i.d. N(0, 1) drawn from `seed`.
struct HyperplaneSet {
  std::size_t dim = 0;
  std::size_t n_hp = 0;
  std::uint64_t seed = 0;
  Matrix planes;
};

HyperplaneSet make_hyperplanes(std::size_t dim, std::size_t n_hp, std::uint64_t seed);

// Hyperplanes are shared by all heads of a layer and seeded per layer.
inline std::uint64_t layer_hyperplane_seed(std::uint64_t global_seed, std::size_t layer) {
  return global_seed + layer;
}

inline std::size_t words_for_bits(std::size_t bits) { return (bits + 63) / 64; }

// Non-owning view of one packed signature. Bit j lives in word j / 64 at
// position j % 64; padding bits above `bits` are always zero.
struct BitRowView {
  std::span<const std::uint64_t> words;
  std::size_t bits = 0;

  bool bit(std::size_t j) const { return (words[j / 64] >> (j % 64)) & 1u; }
};

// Packed bit matrix, one signature of n_hp bits per row.
class HashBits {
 public:
  HashBits() = default;
  HashBits(std::size_t rows, std::size_t n_hp)
      : rows_(rows), n_hp_(n_hp), stride_(words_for_bits(n_hp)), words_(rows * stride_, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t n_hp() const { return n_hp_; }
  std::size_t words_per_row() const { return stride_; }

  BitRowView row(std::size_t i) const { return {{words_.data() + i * stride_, stride_}, n_hp_}; }
  bool bit(std::size_t i, std::size_t j) const { return row(i).bit(j); }
  void set_bit(std::size_t i, std::size_t j) { words_[i * stride_ + j / 64] |= std::uint64_t{1} << (j % 64); }

  void set_row(std::size_t i, BitRowView src);
  void append_row(BitRowView src);

  bool operator==(const HashBits&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t n_hp_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> words_;
};

// bit(i, j) = 1 iff (keys * planes)(i, j) > 0. Zero projections map to 0.
HashBits generate_hashbits(const Matrix& keys, const HyperplaneSet& planes);

// Signature of a single vector (used for running-mean cluster keys).
std::vector<std::uint64_t> hash_vector(std::span<const double> v, const HyperplaneSet& planes);

std::uint32_t hamming(BitRowView a, BitRowView b);
std::vector<std::uint32_t> hamming_row_vs_set(BitRowView row, const HashBits& set);

// One lowercase hex string per row, most significant word first.
std::string to_hex_lines(const HashBits& bits);

}  // namespace streamkv
