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

#include "streamkv/matrix.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "streamkv/errors.h"

namespace streamkv {

void Matrix::append_rows(const Matrix& other) {
  if (empty() && rows_ == 0) {
    cols_ = other.cols_;
  }
  if (other.cols_ != cols_) {
    throw ShapeError("append_rows: column mismatch " + std::to_string(cols_) + " vs " +
                     std::to_string(other.cols_));
  }
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) {
      throw ShapeError("gather_rows: row " + std::to_string(indices[i]) + " out of range");
    }
    auto src = row(indices[i]);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double dot(std::span<const float> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double squared_norm(std::span<const float> a) { return dot(a, a); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: length mismatch");
  }
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = dot(a, b) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace streamkv
