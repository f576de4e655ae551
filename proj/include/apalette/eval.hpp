// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// Objective metrics with fixed, seeded stand-in embedders. Values are
// reproducible across runs but not comparable to VGGish/CLAP numbers.

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "apalette/audio_io.hpp"
#include "apalette/conditioning.hpp"
#include "apalette/diffusion.hpp"
#include "apalette/features.hpp"
#include "apalette/pipeline.hpp"

namespace apalette {

inline constexpr int kEmbedBands = 16;
inline constexpr int kEmbedDim = 2 * kEmbedBands;
inline constexpr const char* kEmbedderTag = "logmel16-meanstd";

/// Per-band mean then per-band (population) std of ln(E + 1e-10) over the
/// frames of a 16-band mel spectrogram.
Eigen::VectorXd embed_audio(const AudioClip& clip, const FrameGrid& grid = {});

struct EmbeddingStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;

  /// Shapes agree, cov symmetric within 1e-9 (relative), finite.
  void validate() const;
};

/// Sample mean and unbiased covariance; needs at least two rows.
EmbeddingStats fit_gaussian(std::span<const Eigen::VectorXd> embeddings);

/// Principal square root of a symmetric PSD matrix. Eigenvalues down to
/// -1e-8 (relative to the largest) are clamped to 0; anything more negative
/// throws std::invalid_argument.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

/// Cosine similarity; throws std::invalid_argument on a zero vector.
double similarity_score(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean-pooled text tokens and the audio embedding, each mapped into a
/// shared 32-d space by a fixed seeded matrix, compared by cosine.
double clap_like(const TextEmbedding& text, const AudioClip& clip);

struct Correlation {
  double r = 0.0;
  bool defined = false;  // false when a track is constant or too short
  std::size_t n = 0;
};

Correlation pearson(std::span<const double> a, std::span<const double> b);

struct Adherence {
  Correlation loudness, pitch, centroid, mfcc;
};

/// Extracts controls from `generated`, resamples them onto the target's grid
/// and correlates track by track. Pitch uses jointly voiced frames; the MFCC
/// entry is the mean of the defined per-coefficient correlations.
Adherence control_adherence(const ControlSignals& target, const AudioClip& generated,
                            const FrameGrid& grid = {});
Adherence control_adherence(const ControlSignals& target, const ControlSignals& generated);

struct EvalReport {
  std::string config;
  double fad = 0.0;
  double clap_like = 0.0;
  Adherence adherence;
  std::string embedder = kEmbedderTag;
};

/// The four ablation configurations, in table order.
struct AblationConfig {
  const char* label;
  CondState enabled;
};
inline constexpr std::array<AblationConfig, 4> kAblationConfigs = {{
    {"Baseline (Text Only)", {true, false, false, false, false}},
    {"+ Loudness, Pitch, Centroid", {true, true, true, true, false}},
    {"+ Timbre (MFCCs) only", {true, false, false, false, true}},
    {"Full Model (All Signals)", {true, true, true, true, true}},
}};

/// A held-out reference clip: the audio, its caption and its controls.
struct EvalClip {
  AudioClip audio;
  std::string caption;
  ControlSignals controls;
};

std::vector<EvalClip> load_eval_clips(const DatasetManifest& manifest, const FrameGrid& grid = {});

struct AblationOptions {
  int sampler_steps = 50;
  GuidanceScales scales;
  CfgMode cfg_mode = CfgMode::kNested;
  std::uint64_t seed = 0;
  double latent_scale = kDefaultLatentScale;
  FrameGrid grid;
};

/// Generates one clip per reference (its caption and controls, groups
/// outside `enabled` masked off) and scores the set: FAD against the
/// references, mean clap_like, and adherence r averaged over clips where
/// it is defined. Needs at least two references.
EvalReport evaluate_model(const DiTModel<float>& model, std::span<const EvalClip> references,
                          const CondState& enabled, const AblationOptions& options,
                          const std::string& label);

/// One report per entry of kAblationConfigs, in table order. `adapters[i]`
/// is the fine-tuned adapter file for configuration i, applied on top of
/// the base checkpoint. Missing files raise IoError.
std::vector<EvalReport> run_ablation(const std::filesystem::path& base_checkpoint,
                                     std::span<const std::filesystem::path> adapters,
                                     std::span<const EvalClip> references,
                                     const AblationOptions& options = {});

/// "NA" stands in for undefined correlations.
void write_report_tsv(std::span<const EvalReport> reports, const std::filesystem::path& path);
std::string format_report_tsv(std::span<const EvalReport> reports);

}  // namespace apalette
