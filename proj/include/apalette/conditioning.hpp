// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "apalette/codec.hpp"
#include "apalette/features.hpp"
#include "apalette/tensor.hpp"

namespace apalette {

inline constexpr int kTextDim = 64;

/// Frozen bag-of-words text encoder output. The null embedding is a single
/// all-zero token.
struct TextEmbedding {
  Mat<double> tokens;  // n_tokens x kTextDim
  bool is_null = true;

  static TextEmbedding null();
};

/// Whitespace tokens (lower-cased) mapped to unit vectors seeded by a hash of
/// the token text. Empty or blank captions give the null embedding.
TextEmbedding embed_text(const std::string& caption);

/// Which conditioning sources are visible to the model. The dynamics group
/// is loudness + pitch + centroid; timbre is the 13 MFCCs.
struct CondState {
  bool text = true;
  bool loudness = true;
  bool pitch = true;
  bool centroid = true;
  bool timbre = true;

  bool dyn() const { return loudness || pitch || centroid; }
  CondState operator&(const CondState& o) const {
    return {text && o.text, loudness && o.loudness, pitch && o.pitch,
            centroid && o.centroid, timbre && o.timbre};
  }
  bool operator==(const CondState&) const = default;

  // The four guidance branches.
  static CondState unconditional() { return {false, false, false, false, false}; }
  static CondState text_only() { return {true, false, false, false, false}; }
  static CondState text_dyn() { return {true, true, true, true, false}; }
  static CondState full() { return {true, true, true, true, true}; }
};

/// Trainable linear map from the 16 control channels to latent channels:
/// embedding row f = c_f W + b, with W stored 16 x 64.
template <typename T>
struct ProjectionWeights {
  Mat<T> W = Mat<T>::Zero(kControlChannels, kLatentChannels);
  Vec<T> b = Vec<T>::Zero(kLatentChannels);

  static ProjectionWeights init(std::mt19937_64& rng, double stddev = 0.02);
};

/// Zeroes the channels of dropped groups, in place.
void apply_mask(Mat<double>& ctrls, const CondState& mask);

/// `ctrls` is frames x 16 at the latent rate (normalized). Dropped groups
/// are zeroed before projection.
template <typename T>
Mat<T> project_controls(const Mat<double>& ctrls, const ProjectionWeights<T>& weights,
                        const CondState& mask, std::size_t n_latent_frames);

/// Accumulates dL/dW and dL/db given dL/d(embedding).
template <typename T>
void project_controls_backward(const Mat<double>& ctrls, const CondState& mask,
                               const Mat<T>& d_embedding, ProjectionWeights<T>& grads);

/// Element-wise sum of two equally shaped latent tensors.
template <typename T>
Mat<T> fuse(const Mat<T>& z, const Mat<T>& ctrl_embedding);

/// Three independent Bernoulli draws: text, dynamics group, timbre group.
/// With `per_signal`, loudness/pitch/centroid each get their own draw at
/// p_dyn.
CondState sample_dropout(std::mt19937_64& rng, double p_text, double p_dyn, double p_timbre,
                         bool per_signal = false);

/// Controls ready for the model: resampled to `n_frames` at `latent_rate`,
/// normalized, as a frames x 16 matrix.
Mat<double> prepare_controls(const ControlSignals& raw, double latent_rate,
                             std::size_t n_frames,
                             const ControlStats& stats = ControlStats::defaults());

}  // namespace apalette
