// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace apalette {

LatentSeq FrameStackCodec::encode(const AudioClip& clip) const {
  if (clip.empty()) throw std::invalid_argument("cannot encode an empty clip");
  LatentSeq z;
  z.orig_len = clip.samples.size();
  z.sample_rate = clip.sample_rate;
  z.latent_rate = latent_rate(clip.sample_rate);
  const auto n_frames = static_cast<Eigen::Index>(latent_frames_for(z.orig_len));
  z.frames = LatentFrames::Zero(n_frames, kLatentChannels);
  std::copy(clip.samples.begin(), clip.samples.end(), z.frames.data());
  return z;
}

AudioClip FrameStackCodec::decode(const LatentSeq& latent) const {
  const std::size_t capacity = latent.size() * kLatentChannels;
  if (latent.orig_len > capacity) {
    throw std::invalid_argument("orig_len " + std::to_string(latent.orig_len) +
                                " exceeds latent capacity " + std::to_string(capacity));
  }
  if (!latent.frames.allFinite()) throw std::invalid_argument("latent has non-finite values");
  AudioClip clip;
  clip.sample_rate = latent.sample_rate;
  clip.samples.assign(latent.frames.data(), latent.frames.data() + latent.orig_len);
  return clip;
}

LatentSeq encode(const AudioClip& clip) { return FrameStackCodec{}.encode(clip); }
AudioClip decode(const LatentSeq& latent) { return FrameStackCodec{}.decode(latent); }

}  // namespace apalette
