// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// Noise schedule, epsilon-prediction training with conditioning dropout,
// the three-scale guidance combiner and the DDIM sampler.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "apalette/conditioning.hpp"
#include "apalette/dit.hpp"

namespace apalette {

struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bar;

  int size() const { return static_cast<int>(betas.size()); }
  /// Linear betas from beta_start to beta_end over `steps` entries.
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);
};

/// sqrt(alpha_bar[t]) z0 + sqrt(1 - alpha_bar[t]) noise.
template <typename T>
Mat<T> q_sample(const Mat<T>& z0, int t, const Mat<T>& noise, const NoiseSchedule& schedule);

/// Noise prediction used by training and sampling. The network output F is
/// read as a velocity-like residual around the analytic skip,
///   eps = sqrt(1 - alpha_bar[t]) z_t + sqrt(alpha_bar[t]) F(z_t + emb, t, text),
/// so at high noise the input carries the answer and F only has to supply
/// the clean-signal part. With `cache` F's forward cache is filled.
template <typename T>
Mat<T> predict_noise(const DiTModel<T>& model, const Mat<T>& z_t, const Mat<T>& ctrl_emb, int t,
                     const Mat<T>& text_tokens, const NoiseSchedule& schedule,
                     ForwardCache<T>* cache = nullptr);

struct GuidanceScales {
  double text = 1.0;
  double ctrls = 1.0;
  double timbre = 1.0;

  void validate() const;
  bool needs_controls() const { return ctrls > 0.0 || timbre > 0.0; }
};

enum class CfgMode {
  kNested,       // each scale extrapolates from the previous branch
  kIndependent,  // every scale extrapolates from the unconditional branch
};

/// Nested: eps_u + s_text (eps_T - eps_u) + s_ctrls (eps_TC - eps_T)
///              + s_timbre (eps_TCM - eps_TC).
/// Independent: eps_u + s_text (eps_T - eps_u) + s_ctrls (eps_TC - eps_u)
///              + s_timbre (eps_TCM - eps_u).
template <typename T>
Mat<T> cfg_combine(const Mat<T>& eps_u, const Mat<T>& eps_t, const Mat<T>& eps_tc,
                   const Mat<T>& eps_tcm, const GuidanceScales& scales,
                   CfgMode mode = CfgMode::kNested);

// ---------------------------------------------------------------------------
// Training

/// One clip ready for training: latent frames, raw controls at the
/// extraction rate and the caption embedding.
struct TrainExample {
  Mat<double> z0;  // frames x 64, already multiplied by the latent scale
  ControlSignals controls;
  TextEmbedding text;
  std::string caption;
};

struct TrainConfig {
  int steps = 2000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int batch_size = 8;
  double p_text = 0.15;
  double p_dyn = 0.15;
  double p_timbre = 0.15;
  bool per_signal_dropout = false;
  std::vector<int> median_kernels = {1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31};
  std::uint64_t seed = 0;
  int lora_rank = 4;
  std::optional<double> lora_alpha;
  /// Random window of this many latent frames per sample; 0 uses the clip.
  int crop_frames = 0;
  /// Groups the model may ever see. Training masks and every sampler branch
  /// are ANDed with it (ablation models switch groups off here).
  CondState enabled = CondState::full();
  int checkpoint_every = 0;

  void validate() const;
};

/// Everything random about one training sample, drawn up front so the loss
/// is a deterministic function of the weights.
struct SampleDraw {
  Mat<double> z0;     // possibly cropped
  Mat<double> ctrls;  // frames x 16, filtered, resampled, normalized
  Mat<double> text;   // tokens (the null token when text is dropped)
  CondState mask;
  int t = 0;
  Mat<double> noise;
};

SampleDraw draw_sample(const TrainExample& example, const TrainConfig& config,
                       const NoiseSchedule& schedule, double latent_rate, std::mt19937_64& rng,
                       const ControlStats& stats = ControlStats::defaults());

/// Mean over the batch of mean-squared noise error. When `grads` is given,
/// gradients are accumulated into it: adapters and the control projection
/// for GradScope::kTrainable, every base weight too for GradScope::kAll.
template <typename T>
double training_loss(const DiTModel<T>& model, std::span<const SampleDraw> batch,
                     const NoiseSchedule& schedule, DiTModel<T>* grads = nullptr,
                     GradScope scope = GradScope::kTrainable);

/// Decoupled-weight-decay Adam over the parameter groups it is told to move.
template <typename T>
class AdamW {
 public:
  AdamW(const TrainConfig& config, std::vector<ParamGroup> groups);
  void step(DiTModel<T>& model, DiTModel<T>& grads);
  int steps_taken() const { return t_; }

 private:
  TrainConfig config_;
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<double>> m_, v_;
  int t_ = 0;
};

struct StepLog {
  int step = 0;
  double loss = 0.0;
};

using StepCallback = std::function<void(const StepLog&, const DiTModel<float>&)>;

/// Full-parameter training of the base model on text conditioning only;
/// stands in for the pretrained foundation model. No adapters may be
/// attached; the control projection is left untouched.
std::vector<StepLog> pretrain_base(DiTModel<float>& model, std::span<const TrainExample> data,
                                   const TrainConfig& config, const StepCallback& on_step = {});

/// Freezes the base, attaches fresh adapters when missing, and trains
/// adapters plus the control projection. Deterministic for a fixed seed.
std::vector<StepLog> finetune(DiTModel<float>& model, std::span<const TrainExample> data,
                              const TrainConfig& config, const StepCallback& on_step = {});

/// Trains every base weight and the control projection together, with
/// controls visible. For from-scratch overfitting when there is no base
/// worth freezing. No adapters may be attached.
std::vector<StepLog> train_full(DiTModel<float>& model, std::span<const TrainExample> data,
                                const TrainConfig& config, const StepCallback& on_step = {});

// ---------------------------------------------------------------------------
// Sampling

struct SamplerOptions {
  int steps = 50;
  CfgMode cfg_mode = CfgMode::kNested;
  bool ancestral = false;  // DDPM posterior sampling instead of DDIM eta=0
  double clip_x0 = 0.0;    // clamp predicted z0 to [-clip, clip]; 0 disables
  CondState enabled = CondState::full();
};

/// Denoises from Gaussian noise over `n_frames` latent frames. `ctrls` are
/// normalized controls at the latent rate (n_frames x 16); they are required
/// when scales.needs_controls().
Mat<float> sample(const DiTModel<float>& model, const TextEmbedding& text,
                  const std::optional<Mat<double>>& ctrls, const GuidanceScales& scales,
                  std::size_t n_frames, const SamplerOptions& options, std::uint64_t seed,
                  const NoiseSchedule& schedule = NoiseSchedule::linear());

/// Strided timesteps used by the sampler, descending.
std::vector<int> sampler_timesteps(int schedule_size, int steps);

}  // namespace apalette
