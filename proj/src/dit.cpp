// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/dit.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace apalette {

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
Linear<T> make_linear(int d_in, int d_out, double stddev, std::mt19937_64& rng) {
  Linear<T> l;
  l.W = randn<T>(d_out, d_in, stddev, rng);
  l.b = Vec<T>::Zero(d_out);
  return l;
}

template <typename T>
LayerNorm<T> make_ln(int d) {
  return {Vec<T>::Ones(d), Vec<T>::Zero(d)};
}

template <typename T>
Mat<T> layer_norm(const LayerNorm<T>& ln, const Mat<T>& x, LayerNormCache<T>* cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  Mat<T> xhat(n, d);
  Vec<T> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    inv_std[i] = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    xhat.row(i) = (x.row(i).array() - mean) * inv_std[i];
  }
  Mat<T> y = (xhat.array().rowwise() * ln.gamma.transpose().array()).rowwise() +
             ln.beta.transpose().array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const LayerNorm<T>& ln, const LayerNormCache<T>& c,
                           const Mat<T>& dy, LayerNorm<T>* g) {
  if (g) {
    g->gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix().transpose();
    g->beta += dy.colwise().sum().transpose();
  }
  const Mat<T> dxhat = dy.array().rowwise() * ln.gamma.transpose().array();
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dxhat.row(i).mean();
    const T m2 = dxhat.row(i).dot(c.xhat.row(i)) / static_cast<T>(dy.cols());
    dx.row(i) = (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2) * c.inv_std[i];
  }
  return dx;
}

template <typename T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) *
                static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_grad(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

/// Gradient of a Linear given its input x and upstream dy. Frozen weights
/// only get gradients under GradScope::kAll.
template <typename T>
Mat<T> linear_backward(const Linear<T>& l, const Mat<T>& x, const Mat<T>& dy, Linear<T>& g,
                       GradScope scope) {
  if (scope == GradScope::kAll) {
    g.W.noalias() += dy.transpose() * x;
    g.b += dy.colwise().sum().transpose();
  }
  Mat<T> dx = dy * l.W;
  if (l.adapter_active()) {
    const auto& a = *l.lora;
    auto& ga = *g.lora;
    const T s = a.scale();
    const Mat<T> xa = x * a.A.transpose();  // n x r
    const Mat<T> dxa = s * (dy * a.B);      // n x r
    ga.B.noalias() += s * (dy.transpose() * xa);
    ga.A.noalias() += dxa.transpose() * x;
    dx.noalias() += dxa * a.A;
  }
  return dx;
}

template <typename T>
Mat<T> softmax_rows(const Mat<T>& s) {
  Mat<T> p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const T mx = s.row(i).maxCoeff();
    p.row(i) = (s.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename T>
void attention_backward(const AttentionWeights<T>& w, const AttentionCache<T>& c,
                        const Mat<T>& d_out, int n_heads, AttentionWeights<T>& g,
                        GradScope scope, Mat<T>& d_xq, Mat<T>& d_xkv) {
  const Mat<T> d_heads = linear_backward(w.o, c.heads, d_out, g.o, scope);
  const auto d = c.q.cols();
  const auto dh = d / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
    const Mat<T> d_oh = d_heads(Eigen::all, cols);
    const Mat<T> dp = d_oh * c.v(Eigen::all, cols).transpose();
    dv(Eigen::all, cols) = p.transpose() * d_oh;
    Mat<T> ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
    ds *= scale;
    dq(Eigen::all, cols) = ds * c.k(Eigen::all, cols);
    dk(Eigen::all, cols) = ds.transpose() * c.q(Eigen::all, cols);
  }
  d_xq = linear_backward(w.q, c.xq, dq, g.q, scope);
  d_xkv = linear_backward(w.k, c.xkv, dk, g.k, scope);
  d_xkv += linear_backward(w.v, c.xkv, dv, g.v, scope);
}

template <typename T>
void zero_linear(Linear<T>& l) {
  l.W.setZero();
  l.b.setZero();
  if (l.lora) {
    l.lora->A.setZero();
    l.lora->B.setZero();
  }
}

template <typename T, typename U>
Linear<U> cast_linear(const Linear<T>& l) {
  Linear<U> out;
  out.W = l.W.template cast<U>();
  out.b = l.b.template cast<U>();
  out.merged = l.merged;
  if (l.lora) {
    LoRAAdapter<U> a;
    a.A = l.lora->A.template cast<U>();
    a.B = l.lora->B.template cast<U>();
    a.alpha = static_cast<U>(l.lora->alpha);
    out.lora = std::move(a);
  }
  return out;
}

template <typename T, typename U>
LayerNorm<U> cast_ln(const LayerNorm<T>& ln) {
  return {ln.gamma.template cast<U>(), ln.beta.template cast<U>()};
}

template <typename T, typename Fn>
void for_each_qv(DiTModel<T>& m, Fn&& fn) {
  for (auto& b : m.blocks) {
    fn(b.self_attn.q);
    fn(b.self_attn.v);
    fn(b.cross_attn.q);
    fn(b.cross_attn.v);
  }
}

template <typename T, typename Fn>
void for_each_linear(const DiTModel<T>& m, Fn&& fn) {
  fn(m.in_proj);
  fn(m.t_fc1);
  fn(m.t_fc2);
  for (const auto& b : m.blocks) {
    for (const auto* a : {&b.self_attn, &b.cross_attn}) {
      fn(a->q);
      fn(a->k);
      fn(a->v);
      fn(a->o);
    }
    fn(b.ff1);
    fn(b.ff2);
  }
  fn(m.out_proj);
}

}  // namespace

void DiTConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_text <= 0 || n_channels <= 0 ||
      max_frames <= 0 || ff_mult <= 0 || num_timesteps <= 0) {
    throw std::invalid_argument("DiT config sizes must be positive");
  }
  if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
  if (d_model % 2 != 0) throw std::invalid_argument("d_model must be even");
}

template <typename T>
Mat<T> Linear<T>::forward(const Mat<T>& x) const {
  if (x.cols() != W.cols()) {
    throw std::invalid_argument("linear input width " + std::to_string(x.cols()) +
                                " != " + std::to_string(W.cols()));
  }
  Mat<T> y = x * W.transpose();
  y.rowwise() += b.transpose();
  if (adapter_active()) {
    const Mat<T> xa = x * lora->A.transpose();
    y.noalias() += lora->scale() * (xa * lora->B.transpose());
  }
  return y;
}

template <typename T>
void Linear<T>::merge_adapter() {
  if (!lora) throw std::logic_error("no adapter to merge");
  if (merged) throw std::logic_error("adapter already merged; merging again would add its delta twice");
  W = merge(*lora, W);
  merged = true;
}

template <typename T>
DiTModel<T> DiTModel<T>::init(const DiTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg.d_model;
  const double s_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double s_res = s_d / std::sqrt(2.0 * cfg.n_layers);
  DiTModel m;
  m.config = cfg;
  m.in_proj = make_linear<T>(cfg.n_channels, d, 1.0 / std::sqrt(double(cfg.n_channels)), rng);
  m.pos = randn<T>(cfg.max_frames, d, 0.02, rng);
  m.t_fc1 = make_linear<T>(d, d, s_d, rng);
  m.t_fc2 = make_linear<T>(d, d, s_d, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    Block<T> b;
    b.ln1 = make_ln<T>(d);
    b.ln2 = make_ln<T>(d);
    b.ln3 = make_ln<T>(d);
    b.self_attn = {make_linear<T>(d, d, s_d, rng), make_linear<T>(d, d, s_d, rng),
                   make_linear<T>(d, d, s_d, rng), make_linear<T>(d, d, s_res, rng)};
    const double s_t = 1.0 / std::sqrt(static_cast<double>(cfg.d_text));
    b.cross_attn = {make_linear<T>(d, d, s_d, rng), make_linear<T>(cfg.d_text, d, s_t, rng),
                    make_linear<T>(cfg.d_text, d, s_t, rng), make_linear<T>(d, d, s_res, rng)};
    const int ff = cfg.ff_mult * d;
    b.ff1 = make_linear<T>(d, ff, s_d, rng);
    b.ff2 = make_linear<T>(ff, d, 1.0 / std::sqrt(double(ff)) / std::sqrt(2.0 * cfg.n_layers), rng);
    m.blocks.push_back(std::move(b));
  }
  m.ln_f = make_ln<T>(d);
  m.out_proj = make_linear<T>(d, cfg.n_channels, s_d, rng);
  m.ctrl_proj = ProjectionWeights<T>::init(rng);
  return m;
}

template <typename T>
DiTModel<T> DiTModel<T>::zeros_like() const {
  DiTModel z = *this;
  z.pos.setZero();
  for (auto* l : {&z.in_proj, &z.t_fc1, &z.t_fc2, &z.out_proj}) zero_linear(*l);
  for (auto& b : z.blocks) {
    for (auto* ln : {&b.ln1, &b.ln2, &b.ln3}) {
      ln->gamma.setZero();
      ln->beta.setZero();
    }
    for (auto* a : {&b.self_attn, &b.cross_attn}) {
      for (auto* l : {&a->q, &a->k, &a->v, &a->o}) zero_linear(*l);
    }
    zero_linear(b.ff1);
    zero_linear(b.ff2);
  }
  z.ln_f.gamma.setZero();
  z.ln_f.beta.setZero();
  z.ctrl_proj.W.setZero();
  z.ctrl_proj.b.setZero();
  return z;
}

template <typename T>
template <typename U>
DiTModel<U> DiTModel<T>::cast() const {
  DiTModel<U> m;
  m.config = config;
  m.in_proj = cast_linear<T, U>(in_proj);
  m.pos = pos.template cast<U>();
  m.t_fc1 = cast_linear<T, U>(t_fc1);
  m.t_fc2 = cast_linear<T, U>(t_fc2);
  for (const auto& b : blocks) {
    Block<U> o;
    o.ln1 = cast_ln<T, U>(b.ln1);
    o.ln2 = cast_ln<T, U>(b.ln2);
    o.ln3 = cast_ln<T, U>(b.ln3);
    o.self_attn = {cast_linear<T, U>(b.self_attn.q), cast_linear<T, U>(b.self_attn.k),
                   cast_linear<T, U>(b.self_attn.v), cast_linear<T, U>(b.self_attn.o)};
    o.cross_attn = {cast_linear<T, U>(b.cross_attn.q), cast_linear<T, U>(b.cross_attn.k),
                    cast_linear<T, U>(b.cross_attn.v), cast_linear<T, U>(b.cross_attn.o)};
    o.ff1 = cast_linear<T, U>(b.ff1);
    o.ff2 = cast_linear<T, U>(b.ff2);
    m.blocks.push_back(std::move(o));
  }
  m.ln_f = cast_ln<T, U>(ln_f);
  m.out_proj = cast_linear<T, U>(out_proj);
  m.ctrl_proj.W = ctrl_proj.W.template cast<U>();
  m.ctrl_proj.b = ctrl_proj.b.template cast<U>();
  return m;
}

template <typename T>
bool DiTModel<T>::has_adapters() const {
  bool any = false;
  for_each_linear(*this, [&](const Linear<T>& l) { any = any || l.lora.has_value(); });
  return any;
}

template <typename T>
std::vector<ParamView<T>> param_views(DiTModel<T>& m) {
  std::vector<ParamView<T>> views;
  auto add_mat = [&](const std::string& name, Mat<T>& x, ParamGroup g) {
    views.push_back({name, x.data(), x.size(), {x.rows(), x.cols()}, g});
  };
  auto add_vec = [&](const std::string& name, Vec<T>& x, ParamGroup g) {
    views.push_back({name, x.data(), x.size(), {x.size()}, g});
  };
  auto add_linear = [&](const std::string& name, Linear<T>& l) {
    add_mat(name + ".weight", l.W, ParamGroup::kBase);
    add_vec(name + ".bias", l.b, ParamGroup::kBase);
    if (l.lora) {
      add_mat(name + ".lora_a", l.lora->A, ParamGroup::kAdapter);
      add_mat(name + ".lora_b", l.lora->B, ParamGroup::kAdapter);
    }
  };
  auto add_ln = [&](const std::string& name, LayerNorm<T>& ln) {
    add_vec(name + ".gamma", ln.gamma, ParamGroup::kBase);
    add_vec(name + ".beta", ln.beta, ParamGroup::kBase);
  };
  add_linear("in_proj", m.in_proj);
  add_mat("pos", m.pos, ParamGroup::kBase);
  add_linear("t_fc1", m.t_fc1);
  add_linear("t_fc2", m.t_fc2);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    auto& b = m.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    add_ln(p + "ln1", b.ln1);
    add_ln(p + "ln2", b.ln2);
    add_ln(p + "ln3", b.ln3);
    add_linear(p + "self_attn.q", b.self_attn.q);
    add_linear(p + "self_attn.k", b.self_attn.k);
    add_linear(p + "self_attn.v", b.self_attn.v);
    add_linear(p + "self_attn.o", b.self_attn.o);
    add_linear(p + "cross_attn.q", b.cross_attn.q);
    add_linear(p + "cross_attn.k", b.cross_attn.k);
    add_linear(p + "cross_attn.v", b.cross_attn.v);
    add_linear(p + "cross_attn.o", b.cross_attn.o);
    add_linear(p + "ff1", b.ff1);
    add_linear(p + "ff2", b.ff2);
  }
  add_ln("ln_f", m.ln_f);
  add_linear("out_proj", m.out_proj);
  add_mat("ctrl_proj.weight", m.ctrl_proj.W, ParamGroup::kProjection);
  add_vec("ctrl_proj.bias", m.ctrl_proj.b, ParamGroup::kProjection);
  return views;
}

template <typename T>
void attach_adapters(DiTModel<T>& model, int rank, std::uint64_t seed,
                     std::optional<double> alpha) {
  std::mt19937_64 rng(seed);
  for_each_qv(model, [&](Linear<T>& l) {
    if (l.lora) throw std::logic_error("adapters already attached");
    std::optional<T> a;
    if (alpha) a = static_cast<T>(*alpha);
    l.lora = LoRAAdapter<T>::init(l.d_in(), l.d_out(), rank, rng, a);
    l.merged = false;
  });
}

template <typename T>
void merge_adapters(DiTModel<T>& model) {
  if (!model.has_adapters()) throw std::logic_error("model has no adapters to merge");
  for_each_qv(model, [](Linear<T>& l) {
    if (l.lora) l.merge_adapter();
  });
}

template <typename T>
void detach_adapters(DiTModel<T>& model) {
  for_each_qv(model, [](Linear<T>& l) {
    l.lora.reset();
    l.merged = false;
  });
}

template <typename T>
ParamCounts count_params(const DiTModel<T>& model) {
  ParamCounts c;
  auto& m = const_cast<DiTModel<T>&>(model);  // views are only read here
  for (const auto& v : param_views(m)) {
    const auto n = static_cast<std::size_t>(v.size);
    c.total += n;
    if (v.group != ParamGroup::kBase) c.trainable += n;
  }
  return c;
}

template <typename T>
double trainable_fraction(const DiTModel<T>& model) {
  return count_params(model).fraction();
}

template <typename T>
Vec<T> timestep_embedding(int t, int dim) {
  const int half = dim / 2;
  Vec<T> e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e[k] = static_cast<T>(std::sin(t * freq));
    e[k + half] = static_cast<T>(std::cos(t * freq));
  }
  return e;
}

template <typename T>
Mat<T> attention(const Mat<T>& q_tokens, const Mat<T>& kv_tokens,
                 const AttentionWeights<T>& w, int n_heads, AttentionCache<T>* cache) {
  if (n_heads <= 0 || w.q.d_out() % n_heads != 0) {
    throw std::invalid_argument("attention width must be divisible by the head count");
  }
  if (kv_tokens.rows() == 0) throw std::invalid_argument("attention needs at least one kv token");
  if (w.q.d_out() != w.k.d_out() || w.k.d_out() != w.v.d_out() || w.o.d_in() != w.v.d_out()) {
    throw std::invalid_argument("attention projection widths disagree");
  }
  Mat<T> q = w.q.forward(q_tokens);
  Mat<T> k = w.k.forward(kv_tokens);
  Mat<T> v = w.v.forward(kv_tokens);
  const auto d = q.cols();
  const auto dh = d / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> heads(q.rows(), d);
  std::vector<Mat<T>> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    const Mat<T> s = (q(Eigen::all, cols) * k(Eigen::all, cols).transpose()) * scale;
    Mat<T> p = softmax_rows(s);
    heads(Eigen::all, cols) = p * v(Eigen::all, cols);
    if (cache) probs.push_back(std::move(p));
  }
  Mat<T> out = w.o.forward(heads);
  if (cache) {
    cache->xq = q_tokens;
    cache->xkv = kv_tokens;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->heads = std::move(heads);
  }
  return out;
}

template <typename T>
Mat<T> forward(const DiTModel<T>& m, const Mat<T>& z_in, int t, const Mat<T>& text_tokens,
               ForwardCache<T>* cache) {
  const auto& cfg = m.config;
  const auto n = z_in.rows();
  if (n < 1 || n > cfg.max_frames) {
    throw std::invalid_argument("frame count " + std::to_string(n) + " outside [1, " +
                                std::to_string(cfg.max_frames) + "]");
  }
  if (z_in.cols() != cfg.n_channels) throw std::invalid_argument("latent channel mismatch");
  if (text_tokens.rows() < 1 || text_tokens.cols() != cfg.d_text) {
    throw std::invalid_argument("text tokens must be n x d_text with n >= 1");
  }
  if (t < 0 || t >= cfg.num_timesteps) throw std::invalid_argument("timestep out of range");

  const Vec<T> t_sin = timestep_embedding<T>(t, cfg.d_model);
  const Vec<T> t_pre = m.t_fc1.W * t_sin + m.t_fc1.b;
  const Vec<T> t_act = t_pre.unaryExpr([](T x) { return silu(x); });
  const Vec<T> temb = m.t_fc2.W * t_act + m.t_fc2.b;

  Mat<T> h = m.in_proj.forward(z_in);
  h += m.pos.topRows(n);
  h.rowwise() += temb.transpose();

  if (cache) {
    cache->x = z_in;
    cache->text = text_tokens;
    cache->t_sin = t_sin;
    cache->t_pre = t_pre;
    cache->t_act = t_act;
    cache->blocks.assign(m.blocks.size(), {});
  }
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const auto& b = m.blocks[l];
    BlockCache<T>* bc = cache ? &cache->blocks[l] : nullptr;
    const Mat<T> a1 = layer_norm(b.ln1, h, bc ? &bc->ln1 : nullptr);
    h += attention(a1, a1, b.self_attn, cfg.n_heads, bc ? &bc->self_attn : nullptr);
    const Mat<T> a2 = layer_norm(b.ln2, h, bc ? &bc->ln2 : nullptr);
    h += attention(a2, text_tokens, b.cross_attn, cfg.n_heads, bc ? &bc->cross_attn : nullptr);
    Mat<T> a3 = layer_norm(b.ln3, h, bc ? &bc->ln3 : nullptr);
    Mat<T> pre = b.ff1.forward(a3);
    Mat<T> act = pre.unaryExpr([](T x) { return gelu(x); });
    h += b.ff2.forward(act);
    if (bc) {
      bc->ff_in = std::move(a3);
      bc->ff_pre = std::move(pre);
      bc->ff_act = std::move(act);
    }
  }
  Mat<T> hf = layer_norm(m.ln_f, h, cache ? &cache->ln_f : nullptr);
  Mat<T> out = m.out_proj.forward(hf);
  if (cache) cache->ln_f_out = std::move(hf);
  return out;
}

template <typename T>
Mat<T> backward(const DiTModel<T>& m, const ForwardCache<T>& c, const Mat<T>& d_out,
                DiTModel<T>& g, GradScope scope) {
  const auto& cfg = m.config;
  if (c.blocks.size() != m.blocks.size()) throw std::invalid_argument("cache does not match model");
  const bool all = scope == GradScope::kAll;

  Mat<T> dh = layer_norm_backward(m.ln_f, c.ln_f,
                                  linear_backward(m.out_proj, c.ln_f_out, d_out, g.out_proj, scope),
                                  all ? &g.ln_f : nullptr);
  for (std::size_t li = m.blocks.size(); li-- > 0;) {
    const auto& b = m.blocks[li];
    const auto& bc = c.blocks[li];
    auto& gb = g.blocks[li];

    // Feed-forward.
    const Mat<T> d_act = linear_backward(b.ff2, bc.ff_act, dh, gb.ff2, scope);
    const Mat<T> d_pre =
        d_act.array() * bc.ff_pre.unaryExpr([](T x) { return gelu_grad(x); }).array();
    const Mat<T> d_a3 = linear_backward(b.ff1, bc.ff_in, d_pre, gb.ff1, scope);
    dh += layer_norm_backward(b.ln3, bc.ln3, d_a3, all ? &gb.ln3 : nullptr);

    // Cross-attention; text tokens are frozen inputs.
    Mat<T> d_a2, d_text;
    attention_backward(b.cross_attn, bc.cross_attn, dh, cfg.n_heads, gb.cross_attn, scope, d_a2,
                       d_text);
    dh += layer_norm_backward(b.ln2, bc.ln2, d_a2, all ? &gb.ln2 : nullptr);

    // Self-attention: query and key/value paths share the input.
    Mat<T> d_q_in, d_kv_in;
    attention_backward(b.self_attn, bc.self_attn, dh, cfg.n_heads, gb.self_attn, scope, d_q_in,
                       d_kv_in);
    d_q_in += d_kv_in;
    dh += layer_norm_backward(b.ln1, bc.ln1, d_q_in, all ? &gb.ln1 : nullptr);
  }

  const auto n = c.x.rows();
  if (all) {
    g.pos.topRows(n) += dh;
    const Vec<T> d_temb = dh.colwise().sum().transpose();
    g.t_fc2.W.noalias() += d_temb * c.t_act.transpose();
    g.t_fc2.b += d_temb;
    const Vec<T> d_act = m.t_fc2.W.transpose() * d_temb;
    const Vec<T> d_pre =
        d_act.array() * c.t_pre.unaryExpr([](T x) { return silu_grad(x); }).array();
    g.t_fc1.W.noalias() += d_pre * c.t_sin.transpose();
    g.t_fc1.b += d_pre;
  }
  return linear_backward(m.in_proj, c.x, dh, g.in_proj, scope);
}

#define APALETTE_INSTANTIATE(T)                                                              \
  template struct Linear<T>;                                                                 \
  template struct DiTModel<T>;                                                               \
  template std::vector<ParamView<T>> param_views(DiTModel<T>&);                              \
  template void attach_adapters(DiTModel<T>&, int, std::uint64_t, std::optional<double>);   \
  template void merge_adapters(DiTModel<T>&);                                                \
  template void detach_adapters(DiTModel<T>&);                                               \
  template ParamCounts count_params(const DiTModel<T>&);                                     \
  template double trainable_fraction(const DiTModel<T>&);                                    \
  template Vec<T> timestep_embedding<T>(int, int);                                           \
  template Mat<T> attention(const Mat<T>&, const Mat<T>&, const AttentionWeights<T>&, int,  \
                            AttentionCache<T>*);                                             \
  template Mat<T> forward(const DiTModel<T>&, const Mat<T>&, int, const Mat<T>&,            \
                          ForwardCache<T>*);                                                 \
  template Mat<T> backward(const DiTModel<T>&, const ForwardCache<T>&, const Mat<T>&,       \
                           DiTModel<T>&, GradScope);

APALETTE_INSTANTIATE(float)
APALETTE_INSTANTIATE(double)
#undef APALETTE_INSTANTIATE

template DiTModel<double> DiTModel<float>::cast<double>() const;
template DiTModel<float> DiTModel<double>::cast<float>() const;
template DiTModel<float> DiTModel<float>::cast<float>() const;
template DiTModel<double> DiTModel<double>::cast<double>() const;

}  // namespace apalette
