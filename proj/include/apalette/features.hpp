// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// Control-signal extraction: loudness (RMS), pitch (YIN), spectral centroid
// and MFCCs on a shared centered frame grid, plus the training-time
// transformations applied to those tracks.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "apalette/audio_io.hpp"

namespace apalette {

inline constexpr int kNumMfcc = 13;
inline constexpr int kNumMelBands = 40;
inline constexpr int kControlChannels = 3 + kNumMfcc;  // loudness, pitch, centroid, mfcc
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kPitchMinHz = 50.0;
inline constexpr double kPitchMaxHz = 2000.0;
inline constexpr double kYinThreshold = 0.15;

/// Centered analysis frames: frame f covers samples
/// [f*hop - win/2, f*hop + win/2) with reflection at the clip edges.
struct FrameGrid {
  int win_samples = 1024;
  int hop_samples = 256;
  int sample_rate = kDefaultSampleRate;

  double frame_rate() const { return static_cast<double>(sample_rate) / hop_samples; }
  std::size_t frame_count(std::size_t n_samples) const {
    return 1 + n_samples / static_cast<std::size_t>(hop_samples);
  }
  /// Throws std::invalid_argument unless 0 < hop <= win and win is a power of two.
  void validate() const;
};

using Mfcc = std::array<double, kNumMfcc>;

/// The four conditioning tracks on one frame grid. Pitch 0 means unvoiced.
/// After normalize_controls the same container holds normalized values.
struct ControlSignals {
  std::vector<double> loudness;
  std::vector<double> pitch_hz;
  std::vector<double> centroid_hz;
  std::vector<Mfcc> mfcc;
  double frame_rate = 0.0;

  std::size_t frames() const { return loudness.size(); }
  /// Track lengths agree and every value is finite.
  void validate() const;

  /// frames x 16, channel order (loudness, pitch, centroid, mfcc0..12).
  Eigen::MatrixXd to_matrix() const;
  static ControlSignals from_matrix(const Eigen::MatrixXd& m, double frame_rate);
};

/// The analysis window for frame `index`, reflection-padded.
std::vector<double> frame_at(std::span<const float> samples, const FrameGrid& grid,
                             std::size_t index);

std::vector<double> rms_loudness(const AudioClip& clip, const FrameGrid& grid = {});
std::vector<double> pitch_track(const AudioClip& clip, const FrameGrid& grid = {});
std::vector<double> spectral_centroid(const AudioClip& clip, const FrameGrid& grid = {});
std::vector<Mfcc> mfcc13(const AudioClip& clip, const FrameGrid& grid = {});
ControlSignals extract_controls(const AudioClip& clip, const FrameGrid& grid = {});

/// YIN estimate for one analysis frame; 0 when aperiodic.
double yin_pitch(std::span<const double> frame, int sample_rate,
                 double threshold = kYinThreshold);

/// `n_bands` HTK-style triangular mel filters spanning [0, sample_rate/2],
/// as an n_bands x (fft_size/2 + 1) weight matrix.
Eigen::MatrixXd mel_filterbank(int n_bands, int fft_size, int sample_rate);

/// |FFT|^2 of the Hann-windowed frame, bins 0..N/2.
std::vector<double> power_spectrum(std::span<const double> frame);

// ---------------------------------------------------------------------------
// Training-time transformations

/// Sliding median with replicate padding. `kernel` must be odd and >= 1.
std::vector<double> median_filter(std::span<const double> signal, int kernel);

/// Independent kernel per track (loudness, pitch, centroid, then one kernel
/// shared by all MFCC coefficients), drawn uniformly from `kernel_choices`.
ControlSignals random_median_filter(const ControlSignals& ctrls, std::mt19937_64& rng,
                                    std::span<const int> kernel_choices);

/// Linear interpolation onto a grid at `target_rate`. Output frame k sits at
/// time k / target_rate; times past the last source frame clamp to it. A
/// pitch pair with one unvoiced side takes the nearer frame instead of
/// blending toward 0. Without `n_frames`, the count covers the source span.
ControlSignals resample_controls(const ControlSignals& ctrls, double target_rate,
                                 std::optional<std::size_t> n_frames = std::nullopt);

struct Affine {
  double shift = 0.0;
  double scale = 1.0;
};

/// Per-track affine constants. Pitch constants act on ln(Hz) of voiced frames.
struct ControlStats {
  Affine loudness;
  Affine log_pitch;
  Affine centroid;
  std::array<Affine, kNumMfcc> mfcc;

  void validate() const;
  static ControlStats identity();
  /// Constants measured on the reference corpus (see tests/features_test).
  static ControlStats defaults();
};

ControlSignals normalize_controls(const ControlSignals& ctrls,
                                  const ControlStats& stats = ControlStats::defaults());
ControlSignals denormalize_controls(const ControlSignals& ctrls,
                                    const ControlStats& stats = ControlStats::defaults());

/// Mean/std per track over a corpus of raw control signals.
ControlStats compute_control_stats(std::span<const ControlSignals> corpus);

// ---------------------------------------------------------------------------
// APCS control file: "APCS", u32 version=1, u32 frame_count, u32 layout=16,
// f32 frame_rate, then frame-major little-endian f32 rows of 16 values.

void write_apcs(const ControlSignals& ctrls, const std::filesystem::path& path);
ControlSignals read_apcs(const std::filesystem::path& path);

}  // namespace apalette
