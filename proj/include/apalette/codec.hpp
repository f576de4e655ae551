// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "apalette/audio_io.hpp"

namespace apalette {

inline constexpr int kLatentChannels = 64;

using LatentFrames = Eigen::Matrix<float, Eigen::Dynamic, kLatentChannels, Eigen::RowMajor>;

/// Sequence of 64-channel latent frames plus what the decoder needs to undo
/// the padding.
struct LatentSeq {
  LatentFrames frames;
  double latent_rate = 0.0;
  std::size_t orig_len = 0;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return static_cast<std::size_t>(frames.rows()); }
};

/// Waveform <-> latent mapping the diffusion model operates through.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual LatentSeq encode(const AudioClip& clip) const = 0;
  virtual AudioClip decode(const LatentSeq& latent) const = 0;
  virtual double latent_rate(int sample_rate) const = 0;
};

/// Lossless codec: each block of 64 consecutive samples is one frame, the
/// tail zero-padded.
class FrameStackCodec final : public LatentCodec {
 public:
  LatentSeq encode(const AudioClip& clip) const override;
  AudioClip decode(const LatentSeq& latent) const override;
  double latent_rate(int sample_rate) const override {
    return static_cast<double>(sample_rate) / kLatentChannels;
  }
};

LatentSeq encode(const AudioClip& clip);
AudioClip decode(const LatentSeq& latent);

/// Latent frame count the codec produces for `n_samples`.
inline std::size_t latent_frames_for(std::size_t n_samples) {
  return (n_samples + kLatentChannels - 1) / kLatentChannels;
}

}  // namespace apalette
