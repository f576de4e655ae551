// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/eval.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "apalette/checkpoint.hpp"
#include "test_util.hpp"

namespace apalette {
namespace {

using testing::TempDir;

Eigen::MatrixXd random_psd(int d, std::mt19937_64& rng, int rank = -1) {
  std::normal_distribution<double> n(0.0, 1.0);
  const int r = rank < 0 ? d + 2 : rank;
  Eigen::MatrixXd a(d, r);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a * a.transpose() / r;
}

EmbeddingStats random_stats(int d, std::mt19937_64& rng) {
  EmbeddingStats s;
  s.mean = Eigen::VectorXd::Random(d);
  s.cov = random_psd(d, rng);
  s.n = 100;
  return s;
}

// Independent route to the trace term: the eigenvalues of S_a S_b are those
// of S_a^1/2 S_b S_a^1/2, so Tr(sqrt(.)) is the sum of their square roots.
double frechet_oracle(const EmbeddingStats& a, const EmbeddingStats& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.cov * b.cov);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    tr += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  }
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr;
}

TEST(EmbedTest, DeterministicAndShaped) {
  const AudioClip c = testing::white_noise(0.5, 0.1, 1);
  const auto a = embed_audio(c);
  EXPECT_EQ(a.size(), kEmbedDim);
  EXPECT_TRUE(a == embed_audio(c));
  EXPECT_THROW(embed_audio(AudioClip{}), std::invalid_argument);
}

TEST(EmbedTest, SilenceSitsOnTheFloor) {
  const auto e = embed_audio(testing::silence(0.5));
  for (int b = 0; b < kEmbedBands; ++b) {
    EXPECT_DOUBLE_EQ(e[b], std::log(kLogFloor));
    EXPECT_EQ(e[kEmbedBands + b], 0.0);
  }
}

TEST(EmbedTest, AmplitudeScalingShiftsMeansOnly) {
  const AudioClip c = testing::white_noise(1.0, 0.2, 2);
  const auto base = embed_audio(c);
  for (double k : {0.5, 2.0, 3.7}) {
    AudioClip s = c;
    for (auto& x : s.samples) x = static_cast<float>(x * k);
    const auto e = embed_audio(s);
    // float samples limit agreement to roughly 1e-6 relative per value.
    for (int b = 0; b < kEmbedBands; ++b) {
      EXPECT_NEAR(e[b] - base[b], 2.0 * std::log(k), 1e-5) << "band " << b;
      EXPECT_NEAR(e[kEmbedBands + b], base[kEmbedBands + b], 1e-5) << "band " << b;
    }
  }
}

TEST(FrechetTest, OneDimensionalClosedForm) {
  EmbeddingStats a, b;
  a.mean = Eigen::VectorXd::Constant(1, 0.0);
  b.mean = Eigen::VectorXd::Constant(1, 1.0);
  a.cov = b.cov = Eigen::MatrixXd::Constant(1, 1, 1.0);
  EXPECT_NEAR(frechet_distance(a, b), 1.0, 1e-6);
  b.cov(0, 0) = 4.0;  // (dmu)^2 + (dsigma)^2 = 1 + 1
  EXPECT_NEAR(frechet_distance(a, b), 2.0, 1e-9);
}

TEST(FrechetTest, IdenticalStatsGiveZero) {
  std::mt19937_64 rng(1);
  for (int d : {1, 5, 32}) {
    const auto s = random_stats(d, rng);
    EXPECT_NEAR(frechet_distance(s, s), 0.0, 1e-6) << "d=" << d;
  }
  // Rank-deficient covariance, as from fewer samples than dimensions.
  EmbeddingStats s;
  s.mean = Eigen::VectorXd::Zero(32);
  s.cov = random_psd(32, rng, 5);
  EXPECT_NEAR(frechet_distance(s, s), 0.0, 1e-6);
}

TEST(FrechetTest, SymmetricAndMatchesOracleOnRandomPairs) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const int d = 2 + i % 31;
    const auto a = random_stats(d, rng);
    const auto b = random_stats(d, rng);
    const double ab = frechet_distance(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, frechet_distance(b, a), 1e-6) << "pair " << i;
    EXPECT_NEAR(ab, frechet_oracle(a, b), 1e-6 * std::max(1.0, ab)) << "pair " << i;
  }
}

TEST(FrechetTest, RejectsBadStats) {
  std::mt19937_64 rng(3);
  auto a = random_stats(4, rng);
  auto b = random_stats(5, rng);
  EXPECT_THROW(frechet_distance(a, b), std::invalid_argument);
  b = random_stats(4, rng);
  b.cov(0, 1) += 0.5;
  EXPECT_THROW(frechet_distance(a, b), std::invalid_argument);
  b = random_stats(4, rng);
  b.cov(2, 2) = -3.0;
  EXPECT_THROW(frechet_distance(a, b), std::invalid_argument);
}

TEST(SqrtmTest, SquareReconstructsInput) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const Eigen::MatrixXd m = random_psd(3 + i, rng, i % 2 ? 2 : -1);
    const Eigen::MatrixXd r = sqrtm_psd(m);
    EXPECT_LE((r * r - m).norm() / m.norm(), 1e-6);
    EXPECT_LE((r - r.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SqrtmTest, ClampsOnlyTinyNegativeEigenvalues) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(3, 3);
  m(2, 2) = -1e-12;
  const Eigen::MatrixXd r = sqrtm_psd(m);
  EXPECT_EQ(r(2, 2), 0.0);
  m(2, 2) = -1e-3;
  EXPECT_THROW(sqrtm_psd(m), std::invalid_argument);
}

TEST(FitGaussianTest, UnbiasedCovariance) {
  std::vector<Eigen::VectorXd> v = {Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 0),
                                    Eigen::Vector2d(0, 2), Eigen::Vector2d(2, 2)};
  const auto s = fit_gaussian(v);
  EXPECT_TRUE(s.mean.isApprox(Eigen::Vector2d(1, 1)));
  EXPECT_NEAR(s.cov(0, 0), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.cov(0, 1), 0.0, 1e-12);
  EXPECT_THROW(fit_gaussian(std::span(v.data(), 1)), std::invalid_argument);
}

// Two disjoint draws from the procedural Foley generator, embedded with the
// real embedder. Sampling noise dominates, so the distance must shrink as n
// grows.
TEST(FrechetTest, SameDistributionDistanceShrinksWithN) {
  DatasetOptions o;
  o.min_duration = o.max_duration = 1.0;
  const auto specs = draw_dataset_specs(400, 17, o);
  std::vector<Eigen::VectorXd> e(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) e[i] = embed_audio(synth_clip(specs[i]));
  double prev = 1e300;
  for (std::size_t n : {25, 50, 100, 200}) {
    const auto a = fit_gaussian(std::span(e.data(), n));
    const auto b = fit_gaussian(std::span(e.data() + 200, n));
    const double fad = frechet_distance(a, b);
    EXPECT_LT(fad, prev) << "n=" << n;
    prev = fad;
  }
}

TEST(SimilarityTest, CosineRange) {
  const Eigen::Vector3d a(1, 2, 3);
  EXPECT_NEAR(similarity_score(a, a), 1.0, 1e-15);
  EXPECT_NEAR(similarity_score(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 5)), 0.0, 1e-15);
  EXPECT_NEAR(similarity_score(a, -2.0 * a), -1.0, 1e-15);
  EXPECT_THROW(similarity_score(a, Eigen::Vector3d::Zero()), std::invalid_argument);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd x(8), y(8);
    for (int k = 0; k < 8; ++k) {
      x[k] = n(rng);
      y[k] = n(rng);
    }
    const double s = similarity_score(x, y);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(SimilarityTest, ClapLikeIsDeterministicAndBounded) {
  const auto text = embed_text("a siren with a rising pitch");
  SynthSpec spec;
  spec.duration = 0.5;
  const AudioClip c = synth_clip(spec);
  const double s = clap_like(text, c);
  EXPECT_EQ(s, clap_like(text, c));
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
  EXPECT_THROW(clap_like(TextEmbedding::null(), c), std::invalid_argument);
}

TEST(PearsonTest, KnownCases) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {2, 4, 6, 8, 10.5};
  EXPECT_GT(pearson(a, b).r, 0.99);
  const std::vector<double> up = {1, 2, 3}, line = {3, 5, 7}, down = {-1, -2, -3};
  EXPECT_NEAR(pearson(up, line).r, 1.0, 1e-12);
  EXPECT_NEAR(pearson(up, down).r, -1.0, 1e-12);
  const std::vector<double> flat = {4, 4, 4};
  EXPECT_FALSE(pearson(up, flat).defined);
  EXPECT_FALSE(pearson(std::span(up.data(), 1), std::span(line.data(), 1)).defined);
  EXPECT_THROW(pearson(up, a), std::invalid_argument);
}

TEST(PearsonTest, IndependentTracksAreWeaklyCorrelated) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(500), b(500);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    EXPECT_LT(std::abs(pearson(a, b).r), 0.15);
  }
}

TEST(AdherenceTest, SameClipGivesUnitCorrelation) {
  SynthSpec spec;
  spec.kind = SoundKind::kSiren;
  spec.duration = 1.0;
  const AudioClip c = synth_clip(spec);
  const auto target = extract_controls(c);
  const auto a = control_adherence(target, c);
  for (const auto* r : {&a.loudness, &a.pitch, &a.centroid, &a.mfcc}) {
    EXPECT_TRUE(r->defined);
    EXPECT_NEAR(r->r, 1.0, 1e-9);
  }
}

TEST(AdherenceTest, FlippedLoudnessIsMinusOne) {
  SynthSpec spec;
  spec.kind = SoundKind::kFootsteps;
  const auto target = extract_controls(synth_clip(spec));
  ControlSignals flipped = target;
  for (auto& l : flipped.loudness) l = -l;
  EXPECT_NEAR(control_adherence(target, flipped).loudness.r, -1.0, 1e-9);
}

TEST(AdherenceTest, SilenceIsUndefinedNotNaN) {
  const auto target = extract_controls(testing::sine(440, 0.5, 0.5));
  const auto a = control_adherence(target, testing::silence(0.5));
  EXPECT_FALSE(a.loudness.defined);
  EXPECT_FALSE(a.pitch.defined);
  EXPECT_FALSE(std::isnan(a.loudness.r));
}

TEST(ReportTest, TsvLayout) {
  std::vector<EvalReport> rows(2);
  rows[0].config = "Baseline (Text Only)";
  rows[0].fad = 1.5;
  rows[0].clap_like = -0.25;
  rows[0].adherence.loudness = {0.9, true, 10};
  rows[1].config = "x";
  const std::string tsv = format_report_tsv(rows);
  EXPECT_EQ(tsv,
            "config\tfad\tclap_like\tr_loud\tr_pitch\tr_centroid\tr_mfcc\n"
            "Baseline (Text Only)\t1.500000\t-0.250000\t0.900000\tNA\tNA\tNA\n"
            "x\t0.000000\t0.000000\tNA\tNA\tNA\tNA\n");
  rows[1].config = "bad\tlabel";
  EXPECT_THROW(format_report_tsv(rows), std::invalid_argument);
}

TEST(AblationTest, FourRowsInTableOrder) {
  ASSERT_EQ(kAblationConfigs.size(), 4u);
  EXPECT_STREQ(kAblationConfigs[0].label, "Baseline (Text Only)");
  EXPECT_STREQ(kAblationConfigs[1].label, "+ Loudness, Pitch, Centroid");
  EXPECT_STREQ(kAblationConfigs[2].label, "+ Timbre (MFCCs) only");
  EXPECT_STREQ(kAblationConfigs[3].label, "Full Model (All Signals)");

  TempDir dir;
  DiTConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_frames = 64;
  auto base = DiTModel<float>::init(cfg, 1);
  save_base(base, dir / "base.apck");
  std::vector<std::filesystem::path> adapters;
  for (int i = 0; i < 4; ++i) {
    auto m = base;
    attach_adapters(m, 2, 10 + i);
    adapters.push_back(dir / ("lora" + std::to_string(i) + ".apck"));
    save_adapters(m, adapters.back());
  }
  std::vector<EvalClip> refs;
  for (int i = 0; i < 3; ++i) {
    SynthSpec spec;
    spec.kind = static_cast<SoundKind>(i);
    spec.duration = 0.2;
    spec.seed = static_cast<std::uint64_t>(i);
    refs.push_back({synth_clip(spec), caption_for(spec), extract_controls(synth_clip(spec))});
  }
  AblationOptions o;
  o.sampler_steps = 3;
  const auto reports = run_ablation(dir / "base.apck", adapters, refs, o);
  ASSERT_EQ(reports.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(reports[i].config, kAblationConfigs[i].label);
    EXPECT_GE(reports[i].fad, 0.0);
    EXPECT_GE(reports[i].clap_like, -1.0);
    EXPECT_LE(reports[i].clap_like, 1.0);
    EXPECT_EQ(reports[i].embedder, kEmbedderTag);
  }
  EXPECT_EQ(format_report_tsv(reports),
            format_report_tsv(run_ablation(dir / "base.apck", adapters, refs, o)));

  adapters[2] = dir / "missing.apck";
  EXPECT_THROW(run_ablation(dir / "base.apck", adapters, refs, o), IoError);
}

}  // namespace
}  // namespace apalette
