// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/dit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace apalette {
namespace {

DiTConfig micro_config() {
  DiTConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_text = kTextDim;
  c.max_frames = 32;
  return c;
}

Mat<double> text_tokens(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return randn<double>(n, kTextDim, 1.0, rng);
}

// Randomizes every adapter B so the adapter path carries gradient into A.
void randomize_b(DiTModel<double>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& v : param_views(m)) {
    if (v.name.ends_with("lora_b")) {
      std::normal_distribution<double> d(0.0, 0.1);
      for (Eigen::Index i = 0; i < v.size; ++i) v.data[i] = d(rng);
    }
  }
}

TEST(DiTTest, OutputShapeMatchesInput) {
  const auto model = DiTModel<float>::init(DiTConfig{}, 1);
  std::mt19937_64 rng(2);
  const Mat<float> text = text_tokens(3, 3).cast<float>();
  for (int frames : {1, 8, 64}) {
    const Mat<float> z = randn<float>(frames, kLatentChannels, 1.0, rng);
    const Mat<float> out = forward(model, z, 10, text);
    EXPECT_EQ(out.rows(), frames);
    EXPECT_EQ(out.cols(), kLatentChannels);
    EXPECT_TRUE(out.allFinite());
  }
}

TEST(DiTTest, ForwardIsDeterministic) {
  const auto model = DiTModel<float>::init(DiTConfig{}, 1);
  std::mt19937_64 rng(5);
  const Mat<float> z = randn<float>(20, kLatentChannels, 1.0, rng);
  const Mat<float> text = text_tokens(4, 6).cast<float>();
  const Mat<float> a = forward(model, z, 500, text);
  const Mat<float> b = forward(model, z, 500, text);
  EXPECT_TRUE(a == b);
}

TEST(DiTTest, TextTokenOrderDoesNotMatter) {
  const auto model = DiTModel<double>::init(DiTConfig{}, 11);
  std::mt19937_64 rng(12);
  const Mat<double> z = randn<double>(16, kLatentChannels, 1.0, rng);
  const Mat<double> text = text_tokens(5, 13);
  Mat<double> shuffled = text;
  shuffled.row(0) = text.row(3);
  shuffled.row(3) = text.row(4);
  shuffled.row(4) = text.row(0);
  const Mat<double> a = forward(model, z, 77, text);
  const Mat<double> b = forward(model, z, 77, shuffled);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DiTTest, RejectsBadShapes) {
  const auto model = DiTModel<float>::init(micro_config(), 1);
  const Mat<float> text = text_tokens(2, 1).cast<float>();
  EXPECT_THROW(forward(model, Mat<float>(Mat<float>::Zero(33, kLatentChannels)), 0, text),
               std::invalid_argument);
  EXPECT_THROW(forward(model, Mat<float>(Mat<float>::Zero(4, 63)), 0, text), std::invalid_argument);
  EXPECT_THROW(forward(model, Mat<float>(Mat<float>::Zero(4, kLatentChannels)), 1000, text),
               std::invalid_argument);
  EXPECT_THROW(forward(model, Mat<float>(Mat<float>::Zero(4, kLatentChannels)), -1, text),
               std::invalid_argument);
  DiTConfig bad;
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(AttentionTest, SingleKeyReturnsItsValueProjection) {
  const auto model = DiTModel<double>::init(micro_config(), 3);
  const auto& w = model.blocks[0].cross_attn;
  std::mt19937_64 rng(4);
  const Mat<double> q = randn<double>(5, 16, 1.0, rng);
  const Mat<double> kv = randn<double>(1, kTextDim, 1.0, rng);
  const Mat<double> out = attention(q, kv, w, 2);
  const Mat<double> expected_row = w.o.forward(w.v.forward(kv));
  for (int i = 0; i < 5; ++i) {
    EXPECT_LT((out.row(i) - expected_row.row(0)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AttentionTest, RowsOfProbabilitiesSumToOne) {
  const auto model = DiTModel<double>::init(micro_config(), 3);
  std::mt19937_64 rng(8);
  const Mat<double> x = randn<double>(9, 16, 3.0, rng);
  AttentionCache<double> cache;
  attention(x, x, model.blocks[1].self_attn, 2, &cache);
  ASSERT_EQ(cache.probs.size(), 2u);
  for (const auto& p : cache.probs) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
  }
}

TEST(AttentionTest, IdenticalKeysMatchSingleKey) {
  const auto model = DiTModel<double>::init(micro_config(), 3);
  const auto& w = model.blocks[0].cross_attn;
  std::mt19937_64 rng(9);
  const Mat<double> q = randn<double>(4, 16, 1.0, rng);
  const Mat<double> one = randn<double>(1, kTextDim, 1.0, rng);
  const Mat<double> many = one.replicate(6, 1);
  // Brute-force softmax over six equal scores: each weight is 1/6.
  const Mat<double> v = w.v.forward(many);
  const Mat<double> mixed = (v.colwise().sum() / 6.0).replicate(4, 1);
  const Mat<double> oracle = w.o.forward(mixed);
  EXPECT_LT((attention(q, many, w, 2) - oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((attention(q, many, w, 2) - attention(q, one, w, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DiTTest, TimestepEmbeddingLayout) {
  const Vec<double> e = timestep_embedding<double>(0, 8);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(e[k], 0.0);
    EXPECT_EQ(e[k + 4], 1.0);
  }
}

// Scalar objective sum(out .* r) and its gradient w.r.t. one parameter
// tensor, analytic vs central differences.
struct GradCheck {
  DiTModel<double> model;
  Mat<double> z, text, r;
  int t = 321;

  double loss() const { return (forward(model, z, t, text).array() * r.array()).sum(); }

  DiTModel<double> grads(GradScope scope, Mat<double>* dz = nullptr) const {
    ForwardCache<double> cache;
    forward(model, z, t, text, &cache);
    auto g = model.zeros_like();
    const Mat<double> d = backward(model, cache, r, g, scope);
    if (dz) *dz = d;
    return g;
  }
};

GradCheck make_check(bool adapters) {
  GradCheck c;
  c.model = DiTModel<double>::init(micro_config(), 21);
  if (adapters) {
    attach_adapters(c.model, 2, 22);
    randomize_b(c.model, 23);
  }
  std::mt19937_64 rng(24);
  c.z = randn<double>(6, kLatentChannels, 1.0, rng);
  c.text = text_tokens(3, 25);
  c.r = randn<double>(6, kLatentChannels, 1.0, rng);
  return c;
}

double max_rel_error(GradCheck& c, const DiTModel<double>& g, bool (*select)(const ParamView<double>&)) {
  auto views = param_views(c.model);
  auto gv = param_views(const_cast<DiTModel<double>&>(g));
  constexpr double h = 1e-5;
  double worst = 0.0;
  std::mt19937_64 rng(99);
  for (std::size_t p = 0; p < views.size(); ++p) {
    if (!select(views[p])) continue;
    // A handful of coordinates per tensor keeps this fast.
    std::uniform_int_distribution<Eigen::Index> pick(0, views[p].size - 1);
    for (int k = 0; k < 4; ++k) {
      const Eigen::Index i = pick(rng);
      double& x = views[p].data[i];
      const double saved = x;
      x = saved + h;
      const double up = c.loss();
      x = saved - h;
      const double down = c.loss();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = gv[p].data[i];
      // Key biases have an exactly zero gradient (softmax shift invariance);
      // the floor keeps round-off in the difference quotient from counting.
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

TEST(DiTGradientTest, AdapterGradientsMatchFiniteDifferences) {
  auto c = make_check(true);
  const auto g = c.grads(GradScope::kTrainable);
  EXPECT_LT(max_rel_error(c, g, [](const ParamView<double>& v) {
              return v.group == ParamGroup::kAdapter;
            }),
            1e-4);
}

TEST(DiTGradientTest, BaseGradientsMatchFiniteDifferences) {
  auto c = make_check(false);
  const auto g = c.grads(GradScope::kAll);
  EXPECT_LT(max_rel_error(c, g, [](const ParamView<double>& v) {
              return v.group == ParamGroup::kBase;
            }),
            1e-4);
}

TEST(DiTGradientTest, InputGradientMatchesFiniteDifferences) {
  auto c = make_check(true);
  Mat<double> dz;
  c.grads(GradScope::kTrainable, &dz);
  constexpr double h = 1e-5;
  for (Eigen::Index i : {0, 70, 200, 383}) {
    double& x = c.z.data()[i];
    const double saved = x;
    x = saved + h;
    const double up = c.loss();
    x = saved - h;
    const double down = c.loss();
    x = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_NEAR(dz.data()[i], numeric, 1e-4 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(DiTGradientTest, FrozenWeightsGetExactlyZero) {
  auto c = make_check(true);
  auto g = c.grads(GradScope::kTrainable);
  for (const auto& v : param_views(g)) {
    if (v.group != ParamGroup::kBase) continue;
    for (Eigen::Index i = 0; i < v.size; ++i) ASSERT_EQ(v.data[i], 0.0) << v.name;
  }
}

}  // namespace
}  // namespace apalette
