// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>

#include <Eigen/Core>

namespace apalette {

/// Row-major token matrix: one row per frame/token.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Mat<T> randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
Vec<T> randn_vec(Eigen::Index n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vec<T> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<T>(dist(rng));
  return v;
}

}  // namespace apalette
