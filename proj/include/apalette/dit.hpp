// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// Miniature diffusion transformer: pre-norm blocks of self-attention over
// latent frames, cross-attention to text tokens and a GELU feed-forward,
// with a sinusoidal timestep MLP and learned frame positions. Q and V
// projections of every attention accept LoRA adapters.
//
// Backpropagation is written out by hand; `backward` consumes the cache
// filled by `forward`.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apalette/conditioning.hpp"
#include "apalette/lora.hpp"
#include "apalette/tensor.hpp"

namespace apalette {

struct DiTConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_text = kTextDim;
  int n_channels = kLatentChannels;
  int max_frames = 1024;
  int ff_mult = 4;
  int num_timesteps = 1000;

  void validate() const;
  bool operator==(const DiTConfig&) const = default;
};

template <typename T>
struct Linear {
  Mat<T> W;  // d_out x d_in
  Vec<T> b;
  std::optional<LoRAAdapter<T>> lora;
  bool merged = false;  // adapter already folded into W

  int d_in() const { return static_cast<int>(W.cols()); }
  int d_out() const { return static_cast<int>(W.rows()); }
  bool adapter_active() const { return lora.has_value() && !merged; }

  /// Rows of x are inputs; returns x W^T + b (+ the adapter path).
  Mat<T> forward(const Mat<T>& x) const;

  /// Folds the adapter into W. Throws std::logic_error when there is no
  /// adapter or it was merged before.
  void merge_adapter();
};

template <typename T>
struct LayerNorm {
  Vec<T> gamma;
  Vec<T> beta;
};

template <typename T>
struct AttentionWeights {
  Linear<T> q, k, v, o;
};

template <typename T>
struct Block {
  LayerNorm<T> ln1, ln2, ln3;
  AttentionWeights<T> self_attn;
  AttentionWeights<T> cross_attn;
  Linear<T> ff1, ff2;
};

template <typename T>
struct DiTModel {
  DiTConfig config;
  Linear<T> in_proj;
  Mat<T> pos;  // max_frames x d_model
  Linear<T> t_fc1, t_fc2;
  std::vector<Block<T>> blocks;
  LayerNorm<T> ln_f;
  Linear<T> out_proj;
  ProjectionWeights<T> ctrl_proj;

  static DiTModel init(const DiTConfig& config, std::uint64_t seed);
  /// Same structure (including adapters), every value zero.
  DiTModel zeros_like() const;
  template <typename U>
  DiTModel<U> cast() const;

  bool has_adapters() const;
};

enum class ParamGroup { kBase, kAdapter, kProjection };

template <typename T>
struct ParamView {
  std::string name;
  T* data;
  Eigen::Index size;
  std::vector<Eigen::Index> shape;
  ParamGroup group;
};

/// Every parameter tensor in a fixed order. Views alias the model.
template <typename T>
std::vector<ParamView<T>> param_views(DiTModel<T>& model);

/// Adds a rank-`rank` adapter to every attention Q and V projection (self
/// and cross) of every block.
template <typename T>
void attach_adapters(DiTModel<T>& model, int rank, std::uint64_t seed,
                     std::optional<double> alpha = std::nullopt);
template <typename T>
void merge_adapters(DiTModel<T>& model);
template <typename T>
void detach_adapters(DiTModel<T>& model);

struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
  double fraction() const {
    return total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0;
  }
};

/// Counts under the fine-tuning partition: adapters and the control
/// projection are trainable, the rest is frozen.
template <typename T>
ParamCounts count_params(const DiTModel<T>& model);

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct AttentionCache {
  Mat<T> xq, xkv;
  Mat<T> q, k, v;
  std::vector<Mat<T>> probs;  // per head, n_q x n_kv
  Mat<T> heads;               // concatenated head outputs, input to o
};

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Vec<T> inv_std;
};

template <typename T>
struct BlockCache {
  LayerNormCache<T> ln1, ln2, ln3;
  AttentionCache<T> self_attn, cross_attn;
  Mat<T> ff_in, ff_pre, ff_act;
};

template <typename T>
struct ForwardCache {
  Mat<T> x;  // fused input latent
  Mat<T> text;
  Vec<T> t_sin, t_pre, t_act;
  std::vector<BlockCache<T>> blocks;
  LayerNormCache<T> ln_f;
  Mat<T> ln_f_out;
};

/// Scaled dot-product multi-head attention of `q_tokens` over `kv_tokens`.
template <typename T>
Mat<T> attention(const Mat<T>& q_tokens, const Mat<T>& kv_tokens,
                 const AttentionWeights<T>& weights, int n_heads,
                 AttentionCache<T>* cache = nullptr);

/// Sinusoidal embedding of a timestep, length `dim` (sin half, cos half).
template <typename T>
Vec<T> timestep_embedding(int t, int dim);

/// Noise prediction for the fused latent `z_in` (frames x n_channels) at
/// timestep `t`, cross-attending to `text_tokens` (n x d_text).
template <typename T>
Mat<T> forward(const DiTModel<T>& model, const Mat<T>& z_in, int t, const Mat<T>& text_tokens,
               ForwardCache<T>* cache = nullptr);

enum class GradScope {
  kTrainable,  // adapters only; frozen weights receive nothing
  kAll,        // every base weight too (pre-training the base)
};

/// Accumulates parameter gradients into `grads` (same structure as `model`)
/// and returns dL/dz_in. The control projection is not touched here; see
/// project_controls_backward.
template <typename T>
Mat<T> backward(const DiTModel<T>& model, const ForwardCache<T>& cache, const Mat<T>& d_out,
                DiTModel<T>& grads, GradScope scope);

}  // namespace apalette
