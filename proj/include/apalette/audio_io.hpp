// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace apalette {

inline constexpr int kDefaultSampleRate = 16000;

/// Mono audio buffer. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kDefaultSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  bool empty() const { return samples.empty(); }
};

/// Raised for unreadable or malformed files and unwritable paths.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WavEncoding { kPcm16, kFloat32 };

WavEncoding parse_wav_encoding(const std::string& name);

/// Reads a mono PCM16 or IEEE float32 RIFF/WAVE file. PCM16 values are
/// scaled by 1/32768.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes `clip` as mono WAV. PCM16 quantizes with round-to-nearest and
/// saturates at the int16 limits.
void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::kFloat32);

// ---------------------------------------------------------------------------
// Procedural Foley generator

enum class SoundKind { kFootsteps, kSiren, kRain, kBark, kChirp };

const char* kind_name(SoundKind kind);
SoundKind parse_kind(const std::string& name);

/// Recipe for one synthetic clip. `params` holds kind-specific values; any
/// key not given falls back to the kind's default (see synth.cpp):
///   footsteps: rate (steps/s), decay (s), cutoff (Hz)
///   siren:     f_start, f_end (Hz)
///   rain:      cutoff (Hz), density (drops/s), swell (Hz)
///   bark:      f0 (Hz), rate (barks/s), formant (Hz)
///   chirp:     f_low, f_high (Hz), rate (chirps/s)
struct SynthSpec {
  SoundKind kind = SoundKind::kSiren;
  double duration = 1.0;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
  int sample_rate = kDefaultSampleRate;

  double param(const std::string& key) const;
};

/// Validates the spec and renders it. Pure function of the spec.
AudioClip synth_clip(const SynthSpec& spec);

/// Caption text for a spec, e.g. "a siren with a rising pitch".
std::string caption_for(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// Dataset manifests

struct ManifestEntry {
  std::string audio_path;  // relative to the manifest's directory
  std::string caption;
  std::string tag;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory containing manifest.tsv

  std::filesystem::path resolve(const ManifestEntry& e) const {
    return root / e.audio_path;
  }
};

/// One record per line: path TAB caption TAB tag.
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct DatasetOptions {
  double min_duration = 1.0;
  double max_duration = 4.0;
  int sample_rate = kDefaultSampleRate;
  WavEncoding encoding = WavEncoding::kFloat32;
};

/// Draws `n_clips` synth specs from `seed`, writes `clips/NNNN.wav` and
/// `manifest.tsv` under `out_dir`.
DatasetManifest build_dataset(int n_clips, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const DatasetOptions& options = {});

/// The spec list build_dataset would render, without touching disk.
std::vector<SynthSpec> draw_dataset_specs(int n_clips, std::uint64_t seed,
                                          const DatasetOptions& options = {});

}  // namespace apalette
