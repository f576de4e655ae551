// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// Low-rank adapters: W x + (alpha / r) B (A x) over a frozen W.

#pragma once

#include <optional>
#include <random>
#include <stdexcept>

#include "apalette/tensor.hpp"

namespace apalette {

inline constexpr double kLoraInitStd = 0.02;

template <typename T>
struct LoRAAdapter {
  Mat<T> A;  // r x d_in
  Mat<T> B;  // d_out x r
  T alpha = T(1);

  int rank() const { return static_cast<int>(A.rows()); }
  int d_in() const { return static_cast<int>(A.cols()); }
  int d_out() const { return static_cast<int>(B.rows()); }
  T scale() const { return alpha / static_cast<T>(rank()); }

  /// (alpha / r) B A, shape d_out x d_in.
  Mat<T> delta() const { return scale() * (B * A); }

  /// Gaussian A (std 0.02), zero B; alpha defaults to the rank.
  static LoRAAdapter init(int d_in, int d_out, int rank, std::mt19937_64& rng,
                          std::optional<T> alpha = std::nullopt) {
    if (rank < 1 || d_in < 1 || d_out < 1) throw std::invalid_argument("invalid LoRA shape");
    LoRAAdapter a;
    a.A = randn<T>(rank, d_in, kLoraInitStd, rng);
    a.B = Mat<T>::Zero(d_out, rank);
    a.alpha = alpha.value_or(static_cast<T>(rank));
    return a;
  }

  void check_shape(const Mat<T>& W) const {
    if (B.cols() != A.rows() || W.rows() != B.rows() || W.cols() != A.cols()) {
      throw std::invalid_argument("LoRA adapter shape does not match weight");
    }
  }
};

/// W x + (alpha/r) B (A x).
template <typename T>
Vec<T> apply(const LoRAAdapter<T>& adapter, const Mat<T>& W, const Vec<T>& x) {
  adapter.check_shape(W);
  if (x.size() != W.cols()) throw std::invalid_argument("input length does not match weight");
  const Vec<T> ax = adapter.A * x;
  return W * x + adapter.scale() * (adapter.B * ax);
}

/// W + (alpha/r) B A.
template <typename T>
Mat<T> merge(const LoRAAdapter<T>& adapter, const Mat<T>& W) {
  adapter.check_shape(W);
  return W + adapter.delta();
}

template <typename T>
struct DiTModel;

/// trainable / total under the fine-tuning partition (adapters and the
/// control projection train, everything else is frozen).
template <typename T>
double trainable_fraction(const DiTModel<T>& model);

}  // namespace apalette
