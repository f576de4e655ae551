// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "apalette/parallel.hpp"

namespace apalette {

namespace {

constexpr std::uint64_t kAdapterSeedSalt = 0x4c6f5241'41646170ull;

template <typename T>
void check_same_shape(const Mat<T>& a, const Mat<T>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

// into += from, view by view, in a fixed order.
template <typename T>
void accumulate(DiTModel<T>& into, DiTModel<T>& from) {
  auto a = param_views(into);
  auto b = param_views(from);
  for (std::size_t p = 0; p < a.size(); ++p) {
    for (Eigen::Index i = 0; i < a[p].size; ++i) a[p].data[i] += b[p].data[i];
  }
}

template <typename T>
double sample_loss(const DiTModel<T>& model, const SampleDraw& s, const NoiseSchedule& schedule,
                   double batch_scale, DiTModel<T>* grads, GradScope scope) {
  const auto n = static_cast<std::size_t>(s.z0.rows());
  const Mat<T> emb = project_controls<T>(s.ctrls, model.ctrl_proj, s.mask, n);
  const Mat<T> noise = s.noise.cast<T>();
  const Mat<T> z_t = q_sample<T>(s.z0.cast<T>(), s.t, noise, schedule);
  const Mat<T> text = s.text.cast<T>();
  ForwardCache<T> cache;
  const Mat<T> diff =
      predict_noise(model, z_t, emb, s.t, text, schedule, grads ? &cache : nullptr) - noise;
  const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(diff.size());
  if (grads) {
    // d eps / d F = sqrt(alpha_bar); the skip term has no parameters.
    const double out_gain = std::sqrt(schedule.alpha_bar[static_cast<std::size_t>(s.t)]);
    const T k = static_cast<T>(2.0 * batch_scale * out_gain / static_cast<double>(diff.size()));
    const Mat<T> d_out = k * diff;
    const Mat<T> dx = backward(model, cache, d_out, *grads, scope);
    project_controls_backward<T>(s.ctrls, s.mask, dx, grads->ctrl_proj);
  }
  return loss;
}

std::vector<StepLog> train_loop(DiTModel<float>& model, std::span<const TrainExample> data,
                                const TrainConfig& config, GradScope scope,
                                std::vector<ParamGroup> groups, const StepCallback& on_step) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("training set is empty");
  const NoiseSchedule schedule = NoiseSchedule::linear(model.config.num_timesteps);
  // Frame-stacking codec at 16 kHz: 250 latent frames per second. Examples
  // carry their own controls, so the rate only sets the control grid.
  const double latent_rate = static_cast<double>(kDefaultSampleRate) / kLatentChannels;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  AdamW<float> opt(config, std::move(groups));
  std::vector<StepLog> log;
  log.reserve(static_cast<std::size_t>(config.steps));
  std::vector<SampleDraw> batch(static_cast<std::size_t>(config.batch_size));
  for (int step = 1; step <= config.steps; ++step) {
    for (auto& s : batch) s = draw_sample(data[pick(rng)], config, schedule, latent_rate, rng);
    auto grads = model.zeros_like();
    const double loss = training_loss<float>(model, batch, schedule, &grads, scope);
    opt.step(model, grads);
    log.push_back({step, loss});
    if (on_step) on_step(log.back(), model);
  }
  return log;
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument("betas must satisfy 0 < start <= end < 1");
  }
  NoiseSchedule s;
  s.betas.resize(static_cast<std::size_t>(steps));
  s.alpha_bar.resize(static_cast<std::size_t>(steps));
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double beta =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (steps - 1);
    prod *= 1.0 - beta;
    s.betas[static_cast<std::size_t>(t)] = beta;
    s.alpha_bar[static_cast<std::size_t>(t)] = prod;
  }
  return s;
}

template <typename T>
Mat<T> q_sample(const Mat<T>& z0, int t, const Mat<T>& noise, const NoiseSchedule& schedule) {
  check_same_shape(z0, noise, "q_sample");
  if (t < 0 || t >= schedule.size()) throw std::invalid_argument("timestep out of range");
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
  return static_cast<T>(std::sqrt(ab)) * z0 + static_cast<T>(std::sqrt(1.0 - ab)) * noise;
}

template <typename T>
Mat<T> predict_noise(const DiTModel<T>& model, const Mat<T>& z_t, const Mat<T>& ctrl_emb, int t,
                     const Mat<T>& text_tokens, const NoiseSchedule& schedule,
                     ForwardCache<T>* cache) {
  check_same_shape(z_t, ctrl_emb, "predict_noise");
  if (t < 0 || t >= schedule.size()) throw std::invalid_argument("timestep out of range");
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
  const Mat<T> f = forward(model, fuse<T>(z_t, ctrl_emb), t, text_tokens, cache);
  return static_cast<T>(std::sqrt(1.0 - ab)) * z_t + static_cast<T>(std::sqrt(ab)) * f;
}

void GuidanceScales::validate() const {
  for (double s : {text, ctrls, timbre}) {
    if (!std::isfinite(s) || s < 0.0) throw std::invalid_argument("guidance scales must be finite and >= 0");
  }
}

template <typename T>
Mat<T> cfg_combine(const Mat<T>& eps_u, const Mat<T>& eps_t, const Mat<T>& eps_tc,
                   const Mat<T>& eps_tcm, const GuidanceScales& scales, CfgMode mode) {
  check_same_shape(eps_u, eps_t, "cfg_combine");
  check_same_shape(eps_u, eps_tc, "cfg_combine");
  check_same_shape(eps_u, eps_tcm, "cfg_combine");
  scales.validate();
  const T st = static_cast<T>(scales.text);
  const T sc = static_cast<T>(scales.ctrls);
  const T sm = static_cast<T>(scales.timbre);
  if (mode == CfgMode::kIndependent) {
    return eps_u + st * (eps_t - eps_u) + sc * (eps_tc - eps_u) + sm * (eps_tcm - eps_u);
  }
  return eps_u + st * (eps_t - eps_u) + sc * (eps_tc - eps_t) + sm * (eps_tcm - eps_tc);
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamW betas must be in [0, 1)");
  }
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  for (double p : {p_text, p_dyn, p_timbre}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("dropout probabilities must be in [0, 1]");
  }
  if (median_kernels.empty()) throw std::invalid_argument("median_kernels is empty");
  for (int k : median_kernels) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("median kernels must be odd and >= 1");
  }
  if (lora_rank < 1) throw std::invalid_argument("lora_rank must be >= 1");
  if (crop_frames < 0) throw std::invalid_argument("crop_frames must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
}

SampleDraw draw_sample(const TrainExample& example, const TrainConfig& config,
                       const NoiseSchedule& schedule, double latent_rate, std::mt19937_64& rng,
                       const ControlStats& stats) {
  const auto n = static_cast<std::size_t>(example.z0.rows());
  if (n == 0) throw std::invalid_argument("example has no latent frames");
  std::size_t offset = 0;
  std::size_t len = n;
  if (config.crop_frames > 0 && n > static_cast<std::size_t>(config.crop_frames)) {
    len = static_cast<std::size_t>(config.crop_frames);
    offset = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
  }
  const auto idx = static_cast<Eigen::Index>(offset);
  const auto cnt = static_cast<Eigen::Index>(len);

  SampleDraw s;
  s.z0 = example.z0.middleRows(idx, cnt);
  const ControlSignals filtered = random_median_filter(example.controls, rng, config.median_kernels);
  s.ctrls = prepare_controls(filtered, latent_rate, n, stats).middleRows(idx, cnt);
  s.mask = sample_dropout(rng, config.p_text, config.p_dyn, config.p_timbre,
                          config.per_signal_dropout) &
           config.enabled;
  s.text = (s.mask.text && !example.text.is_null) ? example.text.tokens
                                                  : TextEmbedding::null().tokens;
  s.t = std::uniform_int_distribution<int>(0, schedule.size() - 1)(rng);
  s.noise = randn<double>(cnt, kLatentChannels, 1.0, rng);
  return s;
}

template <typename T>
double training_loss(const DiTModel<T>& model, std::span<const SampleDraw> batch,
                     const NoiseSchedule& schedule, DiTModel<T>* grads, GradScope scope) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> losses(batch.size());
  // Per-sample gradients, reduced in index order, so the sum does not depend
  // on how samples were spread over threads.
  std::vector<DiTModel<T>> per_sample;
  if (grads) per_sample.assign(batch.size(), grads->zeros_like());
  parallel_for(batch.size(), [&](std::size_t i) {
    losses[i] = sample_loss(model, batch[i], schedule, scale, grads ? &per_sample[i] : nullptr, scope);
  });
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += losses[i];
    if (grads) accumulate(*grads, per_sample[i]);
  }
  return total * scale;
}

template <typename T>
AdamW<T>::AdamW(const TrainConfig& config, std::vector<ParamGroup> groups)
    : config_(config), groups_(std::move(groups)) {
  config_.validate();
}

template <typename T>
void AdamW<T>::step(DiTModel<T>& model, DiTModel<T>& grads) {
  auto params = param_views(model);
  auto gs = param_views(grads);
  if (params.size() != gs.size()) throw std::invalid_argument("gradient structure does not match model");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (std::find(groups_.begin(), groups_.end(), params[p].group) == groups_.end()) continue;
    auto& m = m_[p];
    auto& v = v_[p];
    if (m.empty()) {
      m.assign(static_cast<std::size_t>(params[p].size), 0.0);
      v.assign(static_cast<std::size_t>(params[p].size), 0.0);
    }
    for (Eigen::Index i = 0; i < params[p].size; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double g = gs[p].data[i];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
      const double w = params[p].data[i];
      params[p].data[i] = static_cast<T>(w - config_.lr * (update + config_.weight_decay * w));
    }
  }
}

std::vector<StepLog> pretrain_base(DiTModel<float>& model, std::span<const TrainExample> data,
                                   const TrainConfig& config, const StepCallback& on_step) {
  if (model.has_adapters()) throw std::logic_error("pre-training expects a model without adapters");
  TrainConfig c = config;
  c.enabled = CondState::text_only() & config.enabled;
  return train_loop(model, data, c, GradScope::kAll, {ParamGroup::kBase}, on_step);
}

std::vector<StepLog> finetune(DiTModel<float>& model, std::span<const TrainExample> data,
                              const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  if (!model.has_adapters()) {
    attach_adapters(model, config.lora_rank, config.seed ^ kAdapterSeedSalt, config.lora_alpha);
  }
  return train_loop(model, data, config, GradScope::kTrainable,
                    {ParamGroup::kAdapter, ParamGroup::kProjection}, on_step);
}

std::vector<StepLog> train_full(DiTModel<float>& model, std::span<const TrainExample> data,
                                const TrainConfig& config, const StepCallback& on_step) {
  if (model.has_adapters()) throw std::logic_error("full training expects a model without adapters");
  return train_loop(model, data, config, GradScope::kAll, {ParamGroup::kBase, ParamGroup::kProjection},
                    on_step);
}

std::vector<int> sampler_timesteps(int schedule_size, int steps) {
  if (steps < 1 || steps > schedule_size) {
    throw std::invalid_argument("sampler steps must be in [1, " + std::to_string(schedule_size) + "]");
  }
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(steps));
  for (int i = steps - 1; i >= 0; --i) {
    ts.push_back(static_cast<int>(static_cast<long long>(i) * schedule_size / steps));
  }
  return ts;
}

Mat<float> sample(const DiTModel<float>& model, const TextEmbedding& text,
                  const std::optional<Mat<double>>& ctrls, const GuidanceScales& scales,
                  std::size_t n_frames, const SamplerOptions& options, std::uint64_t seed,
                  const NoiseSchedule& schedule) {
  scales.validate();
  if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
  if (scales.needs_controls() && !ctrls) {
    throw std::invalid_argument(
        "s_ctrls or s_timbre > 0 needs reference controls; pass controls or set both scales to 0");
  }
  if (ctrls && (static_cast<std::size_t>(ctrls->rows()) != n_frames ||
                ctrls->cols() != kControlChannels)) {
    throw std::invalid_argument("controls must be n_frames x 16 at the latent rate");
  }
  if (schedule.size() != model.config.num_timesteps) {
    throw std::invalid_argument("schedule length does not match the model");
  }
  const auto ts = sampler_timesteps(schedule.size(), options.steps);

  const Mat<float> cond_text = text.tokens.cast<float>();
  const Mat<float> null_text = TextEmbedding::null().tokens.cast<float>();
  const Mat<double> zero_ctrls = Mat<double>::Zero(static_cast<Eigen::Index>(n_frames), kControlChannels);
  const Mat<double>& c = ctrls ? *ctrls : zero_ctrls;

  struct Branch {
    CondState mask;
    Mat<float> emb;
  };
  std::vector<Branch> branches;
  for (const auto& m : {CondState::unconditional(), CondState::text_only(), CondState::text_dyn(),
                        CondState::full()}) {
    const CondState mask = m & options.enabled;
    branches.push_back({mask, project_controls<float>(c, model.ctrl_proj, mask, n_frames)});
  }
  // Without reference controls the control branches coincide with text-only.
  const std::size_t n_branches = ctrls ? 4 : 2;

  std::mt19937_64 rng(seed);
  Mat<float> x = randn<float>(static_cast<Eigen::Index>(n_frames), kLatentChannels, 1.0, rng);
  std::vector<Mat<float>> eps(4);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    parallel_for(n_branches, [&](std::size_t b) {
      const Mat<float>& tokens = branches[b].mask.text && !text.is_null ? cond_text : null_text;
      eps[b] = predict_noise(model, x, branches[b].emb, t, tokens, schedule);
    });
    if (!ctrls) eps[2] = eps[3] = eps[1];
    const Mat<float> e = cfg_combine(eps[0], eps[1], eps[2], eps[3], scales, options.cfg_mode);

    const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = i + 1 < ts.size() ? schedule.alpha_bar[static_cast<std::size_t>(ts[i + 1])] : 1.0;
    Mat<float> x0 = (x - static_cast<float>(std::sqrt(1.0 - ab)) * e) / static_cast<float>(std::sqrt(ab));
    if (options.clip_x0 > 0.0) {
      const auto lim = static_cast<float>(options.clip_x0);
      x0 = x0.cwiseMax(-lim).cwiseMin(lim);
    }
    // Re-derive the noise direction from the (possibly clipped) x0.
    const Mat<float> e_hat =
        options.clip_x0 > 0.0
            ? Mat<float>((x - static_cast<float>(std::sqrt(ab)) * x0) / static_cast<float>(std::sqrt(1.0 - ab)))
            : e;
    double sigma = 0.0;
    if (options.ancestral && i + 1 < ts.size()) {
      sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev));
    }
    x = static_cast<float>(std::sqrt(ab_prev)) * x0 +
        static_cast<float>(std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma))) * e_hat;
    if (sigma > 0.0) x += static_cast<float>(sigma) * randn<float>(x.rows(), x.cols(), 1.0, rng);
  }
  return x;
}

#define APALETTE_INSTANTIATE(T)                                                              \
  template Mat<T> q_sample(const Mat<T>&, int, const Mat<T>&, const NoiseSchedule&);         \
  template Mat<T> predict_noise(const DiTModel<T>&, const Mat<T>&, const Mat<T>&, int,       \
                                const Mat<T>&, const NoiseSchedule&, ForwardCache<T>*);      \
  template Mat<T> cfg_combine(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&,   \
                              const GuidanceScales&, CfgMode);                               \
  template double training_loss(const DiTModel<T>&, std::span<const SampleDraw>,            \
                                const NoiseSchedule&, DiTModel<T>*, GradScope);              \
  template class AdamW<T>;

APALETTE_INSTANTIATE(float)
APALETTE_INSTANTIATE(double)
#undef APALETTE_INSTANTIATE

}  // namespace apalette
