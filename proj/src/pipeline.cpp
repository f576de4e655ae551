// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/pipeline.hpp"

#include <stdexcept>

#include "apalette/parallel.hpp"

namespace apalette {

Mat<double> to_model_latents(const LatentSeq& latents, double latent_scale) {
  if (!(latent_scale > 0.0)) throw std::invalid_argument("latent_scale must be positive");
  return latents.frames.cast<double>() * latent_scale;
}

LatentSeq from_model_latents(const Mat<float>& z, std::size_t orig_len, int sample_rate,
                             double latent_scale) {
  if (!(latent_scale > 0.0)) throw std::invalid_argument("latent_scale must be positive");
  if (z.cols() != kLatentChannels) throw std::invalid_argument("latents must have 64 channels");
  LatentSeq seq;
  seq.frames = (z.cast<double>() / latent_scale).cast<float>();
  seq.sample_rate = sample_rate;
  seq.latent_rate = FrameStackCodec().latent_rate(sample_rate);
  seq.orig_len = std::min(orig_len, static_cast<std::size_t>(z.rows()) * kLatentChannels);
  return seq;
}

TrainExample make_example(const AudioClip& clip, const std::string& caption,
                          double latent_scale, const FrameGrid& grid) {
  if (clip.empty()) throw std::invalid_argument("empty clip");
  if (clip.sample_rate != kDefaultSampleRate) {
    throw std::invalid_argument("training clips must be " + std::to_string(kDefaultSampleRate) + " Hz");
  }
  TrainExample ex;
  ex.z0 = to_model_latents(encode(clip), latent_scale);
  FrameGrid g = grid;
  g.sample_rate = clip.sample_rate;
  ex.controls = extract_controls(clip, g);
  ex.text = embed_text(caption);
  ex.caption = caption;
  return ex;
}

std::vector<TrainExample> load_examples(const DatasetManifest& manifest, double latent_scale,
                                        const FrameGrid& grid) {
  std::vector<TrainExample> out(manifest.entries.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    out[i] = make_example(read_wav(manifest.resolve(e)), e.caption, latent_scale, grid);
  });
  return out;
}

}  // namespace apalette
