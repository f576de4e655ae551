// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace apalette {
namespace {

using testing::TempDir;

AudioClip sawtooth(double freq, double seconds) {
  AudioClip c;
  c.samples.resize(static_cast<std::size_t>(seconds * c.sample_rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const double phase = std::fmod(freq * static_cast<double>(i) / c.sample_rate, 1.0);
    c.samples[i] = static_cast<float>(0.5 * (2.0 * phase - 1.0));
  }
  return c;
}

// Sum of the first `n` harmonics with 1/k amplitudes.
AudioClip harmonic_tone(double freq, double seconds, int n) {
  AudioClip c;
  c.samples.resize(static_cast<std::size_t>(seconds * c.sample_rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    double v = 0.0;
    for (int k = 1; k <= n && k * freq < c.sample_rate / 2.0; ++k) {
      v += std::sin(2.0 * std::numbers::pi * k * freq * i / c.sample_rate) / k;
    }
    c.samples[i] = static_cast<float>(0.3 * v);
  }
  return c;
}

// Orthonormal DCT-II, computed directly.
std::vector<double> dct_oracle(const std::vector<double>& x) {
  const auto n = static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += x[i] * std::cos(std::numbers::pi / n * (static_cast<double>(i) + 0.5) * static_cast<double>(k));
    }
    out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return out;
}

TEST(FrameGridTest, OneSecondGives63Frames) {
  const FrameGrid grid;
  EXPECT_EQ(grid.frame_count(16000), 63u);
  EXPECT_DOUBLE_EQ(grid.frame_rate(), 62.5);
  const auto c = extract_controls(testing::sine(300, 1.0, 0.5));
  EXPECT_EQ(c.loudness.size(), 63u);
  EXPECT_EQ(c.pitch_hz.size(), 63u);
  EXPECT_EQ(c.centroid_hz.size(), 63u);
  EXPECT_EQ(c.mfcc.size(), 63u);
}

TEST(FrameGridTest, RejectsBadGrids) {
  EXPECT_THROW((FrameGrid{1000, 256, 16000}.validate()), std::invalid_argument);
  EXPECT_THROW((FrameGrid{1024, 2048, 16000}.validate()), std::invalid_argument);
  EXPECT_THROW((FrameGrid{1024, 0, 16000}.validate()), std::invalid_argument);
}

TEST(LoudnessTest, ConstantSignal) {
  AudioClip c = testing::silence(0.5);
  std::fill(c.samples.begin(), c.samples.end(), 0.5f);
  for (double v : rms_loudness(c)) EXPECT_NEAR(v, 0.5, 1e-7);
}

TEST(LoudnessTest, SilenceIsZero) {
  for (double v : rms_loudness(testing::silence(0.5))) EXPECT_EQ(v, 0.0);
}

TEST(LoudnessTest, UnitSineIsOneOverRootTwo) {
  // 1024-sample window over 250 Hz at 16 kHz covers exactly 16 periods.
  const auto loud = rms_loudness(testing::sine(250.0, 1.0));
  for (std::size_t f = 4; f + 4 < loud.size(); ++f) EXPECT_NEAR(loud[f], 1.0 / std::sqrt(2.0), 1e-3);
}

TEST(PitchTest, SineAt440) {
  const auto p = pitch_track(testing::sine(440.0, 1.0, 0.5));
  int voiced = 0;
  for (double v : p) {
    if (v > 0.0) {
      ++voiced;
      EXPECT_NEAR(v, 440.0, 0.02 * 440.0);
    }
  }
  EXPECT_GT(voiced, 55);
}

TEST(PitchTest, SawtoothWithoutOctaveError) {
  const auto p = pitch_track(sawtooth(220.0, 1.0));
  int voiced = 0;
  for (double v : p) {
    if (v > 0.0) {
      ++voiced;
      EXPECT_NEAR(v, 220.0, 0.02 * 220.0);
    }
  }
  EXPECT_GT(voiced, 55);
}

TEST(PitchTest, SilenceIsUnvoiced) {
  for (double v : pitch_track(testing::silence(0.5))) EXPECT_EQ(v, 0.0);
}

TEST(PitchTest, HarmonicTonesAcrossRange) {
  for (double f0 : {80.0, 130.0, 220.0, 370.0, 600.0, 1000.0}) {
    const auto p = pitch_track(harmonic_tone(f0, 0.5, 8));
    int voiced = 0, good = 0;
    for (double v : p) {
      if (v > 0.0) {
        ++voiced;
        good += std::abs(v - f0) < 0.02 * f0;
      }
    }
    ASSERT_GT(voiced, 0) << f0;
    EXPECT_GE(good, 0.9 * voiced) << f0;
  }
}

TEST(PitchTest, NoiseIsMostlyUnvoiced) {
  const auto p = pitch_track(testing::white_noise(1.0, 0.3, 5));
  const auto voiced = std::count_if(p.begin(), p.end(), [](double v) { return v > 0.0; });
  EXPECT_LT(voiced, 10);
}

TEST(CentroidTest, SineWithinOneBin) {
  const auto c = spectral_centroid(testing::sine(1000.0, 1.0, 0.5));
  const double bin = 16000.0 / 1024.0;
  for (std::size_t f = 2; f + 2 < c.size(); ++f) EXPECT_NEAR(c[f], 1000.0, bin);
}

TEST(CentroidTest, SilenceIsZero) {
  for (double v : spectral_centroid(testing::silence(0.5))) EXPECT_EQ(v, 0.0);
}

TEST(CentroidTest, WhiteNoiseAveragesQuarterRate) {
  const auto c = spectral_centroid(testing::white_noise(2.0, 0.3, 9));
  const double mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
  EXPECT_NEAR(mean, 4000.0, 400.0);
}

TEST(MfccTest, Deterministic) {
  const AudioClip c = testing::white_noise(0.5, 0.2, 3);
  EXPECT_EQ(mfcc13(c), mfcc13(c));
}

TEST(MfccTest, ScalingShiftsOnlyCoefficientZero) {
  const AudioClip base = testing::white_noise(0.5, 0.2, 4);
  for (double k : {0.25, 2.0, 3.0}) {
    AudioClip scaled = base;
    for (auto& s : scaled.samples) s = static_cast<float>(s * k);
    // Oracle: DCT of the constant log-energy offset 2 ln k.
    const auto shift = dct_oracle(std::vector<double>(kNumMelBands, 2.0 * std::log(k)));
    const auto a = mfcc13(base);
    const auto b = mfcc13(scaled);
    for (std::size_t f = 0; f < a.size(); ++f) {
      // float32 samples scaled by k carry a relative rounding of ~6e-8.
      EXPECT_NEAR(b[f][0] - a[f][0], shift[0], 1e-5) << "k=" << k;
      for (int j = 1; j < kNumMfcc; ++j) EXPECT_NEAR(b[f][j] - a[f][j], shift[j], 1e-6);
    }
  }
}

// Exact powers of two keep the float samples exact, isolating the algebra.
TEST(MfccTest, PowerOfTwoScalingMatchesOracleTo1e6) {
  const AudioClip base = testing::white_noise(0.5, 0.2, 6);
  AudioClip scaled = base;
  for (auto& s : scaled.samples) s *= 4.0f;
  const auto shift = dct_oracle(std::vector<double>(kNumMelBands, 2.0 * std::log(4.0)));
  const auto a = mfcc13(base);
  const auto b = mfcc13(scaled);
  for (std::size_t f = 0; f < a.size(); ++f) {
    for (int j = 0; j < kNumMfcc; ++j) EXPECT_NEAR(b[f][j] - a[f][j], shift[j], 1e-6);
  }
}

TEST(MfccTest, SilenceIsTheConstantVectorDct) {
  const auto oracle = dct_oracle(std::vector<double>(kNumMelBands, std::log(kLogFloor)));
  for (const auto& m : mfcc13(testing::silence(0.3))) {
    EXPECT_NEAR(m[0], oracle[0], 1e-9);
    EXPECT_NEAR(m[0], std::log(kLogFloor) * std::sqrt(kNumMelBands), 1e-9);
    for (int j = 1; j < kNumMfcc; ++j) EXPECT_NEAR(m[j], 0.0, 1e-9);
  }
}

TEST(ExtractTest, EqualsTheIndividualExtractors) {
  SynthSpec spec;
  spec.kind = SoundKind::kBark;
  spec.duration = 1.0;
  const AudioClip clip = synth_clip(spec);
  const auto c = extract_controls(clip);
  EXPECT_EQ(c.loudness, rms_loudness(clip));
  EXPECT_EQ(c.pitch_hz, pitch_track(clip));
  EXPECT_EQ(c.centroid_hz, spectral_centroid(clip));
  EXPECT_EQ(c.mfcc, mfcc13(clip));
  EXPECT_DOUBLE_EQ(c.frame_rate, 62.5);
}

TEST(ExtractTest, SilencePattern) {
  const auto c = extract_controls(testing::silence(1.0));
  const double c0 = std::log(kLogFloor) * std::sqrt(kNumMelBands);
  for (std::size_t f = 0; f < c.frames(); ++f) {
    EXPECT_EQ(c.loudness[f], 0.0);
    EXPECT_EQ(c.pitch_hz[f], 0.0);
    EXPECT_EQ(c.centroid_hz[f], 0.0);
    EXPECT_NEAR(c.mfcc[f][0], c0, 1e-9);
  }
}

TEST(ExtractTest, TrackInvariantsHoldOnCorpus) {
  for (const auto& spec : draw_dataset_specs(10, 3, DatasetOptions{})) {
    const auto c = extract_controls(synth_clip(spec));
    c.validate();
    for (std::size_t f = 0; f < c.frames(); ++f) {
      EXPECT_GE(c.loudness[f], 0.0);
      EXPECT_GE(c.centroid_hz[f], 0.0);
      EXPECT_LE(c.centroid_hz[f], 8000.0);
      const double p = c.pitch_hz[f];
      EXPECT_TRUE(p == 0.0 || (p >= kPitchMinHz && p <= kPitchMaxHz)) << p;
    }
  }
}

TEST(MedianFilterTest, KernelOneIsIdentity) {
  const std::vector<double> x = {3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_EQ(median_filter(x, 1), x);
}

TEST(MedianFilterTest, HandExample) {
  const std::vector<double> x = {1, 5, 1};
  EXPECT_EQ(median_filter(x, 3), (std::vector<double>{1, 1, 1}));
}

TEST(MedianFilterTest, MonotoneInputIsUnchanged) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> step(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + trial % 40);
    double v = 0.0;
    for (auto& e : x) e = v += step(rng) < 0.3 ? 0.0 : step(rng);
    for (int k : {1, 3, 5, 9, 31}) EXPECT_EQ(median_filter(x, k), x);
  }
}

TEST(MedianFilterTest, OutputValuesComeFromTheInput) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  std::vector<double> x(50);
  for (auto& e : x) e = d(rng);
  const std::set<double> values(x.begin(), x.end());
  for (int k : {3, 7, 15}) {
    const auto y = median_filter(x, k);
    ASSERT_EQ(y.size(), x.size());
    for (double v : y) EXPECT_TRUE(values.count(v));
  }
}

TEST(MedianFilterTest, RejectsEvenKernels) {
  const std::vector<double> x = {1, 2, 3};
  EXPECT_THROW(median_filter(x, 2), std::invalid_argument);
  EXPECT_THROW(median_filter(x, 0), std::invalid_argument);
}

ControlSignals random_controls(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ControlSignals c;
  c.frame_rate = 62.5;
  for (std::size_t f = 0; f < frames; ++f) {
    c.loudness.push_back(u(rng));
    c.pitch_hz.push_back(u(rng) < 0.3 ? 0.0 : 100.0 + 500.0 * u(rng));
    c.centroid_hz.push_back(4000.0 * u(rng));
    Mfcc m;
    for (auto& v : m) v = 10.0 * u(rng) - 5.0;
    c.mfcc.push_back(m);
  }
  return c;
}

TEST(RandomMedianFilterTest, KernelOneIsIdentity) {
  const auto c = random_controls(40, 1);
  std::mt19937_64 rng(3);
  const std::vector<int> one = {1};
  const auto out = random_median_filter(c, rng, one);
  EXPECT_EQ(out.loudness, c.loudness);
  EXPECT_EQ(out.pitch_hz, c.pitch_hz);
  EXPECT_EQ(out.centroid_hz, c.centroid_hz);
  EXPECT_EQ(out.mfcc, c.mfcc);
}

TEST(RandomMedianFilterTest, DeterministicUnderSeed) {
  const auto c = random_controls(40, 2);
  const std::vector<int> ks = {1, 3, 5, 7};
  std::mt19937_64 a(11), b(11);
  EXPECT_EQ(random_median_filter(c, a, ks).loudness, random_median_filter(c, b, ks).loudness);
}

TEST(RandomMedianFilterTest, KernelFrequenciesAreUniform) {
  // Track kernel choice through a step input: kernel k smooths the single
  // spike at the centre only when k >= 3.
  ControlSignals c = random_controls(21, 4);
  std::fill(c.loudness.begin(), c.loudness.end(), 0.0);
  c.loudness[9] = c.loudness[10] = 1.0;  // width-2 plateau: survives k=3, not k=5
  c.loudness[15] = 1.0;                  // lone spike: removed by k>=3
  const std::vector<int> ks = {1, 3, 5};
  std::mt19937_64 rng(5);
  constexpr int kDraws = 10000;
  int n1 = 0, n3 = 0, n5 = 0;
  for (int i = 0; i < kDraws; ++i) {
    const auto out = random_median_filter(c, rng, ks);
    if (out.loudness[15] == 1.0) {
      ++n1;
    } else if (out.loudness[9] == 1.0) {
      ++n3;
    } else {
      ++n5;
    }
  }
  const double sigma = std::sqrt(kDraws * (1.0 / 3) * (2.0 / 3));
  for (int n : {n1, n3, n5}) EXPECT_NEAR(n, kDraws / 3.0, 3 * sigma);
}

TEST(ResampleTest, SameRateIsIdentity) {
  const auto c = random_controls(30, 6);
  const auto r = resample_controls(c, c.frame_rate);
  EXPECT_EQ(r.loudness, c.loudness);
  EXPECT_EQ(r.pitch_hz, c.pitch_hz);
  EXPECT_EQ(r.mfcc, c.mfcc);
}

TEST(ResampleTest, ConstantTracksStayConstant) {
  ControlSignals c = random_controls(20, 7);
  std::fill(c.loudness.begin(), c.loudness.end(), 0.3);
  std::fill(c.pitch_hz.begin(), c.pitch_hz.end(), 220.0);
  const auto r = resample_controls(c, 250.0, 80);
  ASSERT_EQ(r.frames(), 80u);
  EXPECT_DOUBLE_EQ(r.frame_rate, 250.0);
  for (std::size_t f = 0; f < r.frames(); ++f) {
    EXPECT_NEAR(r.loudness[f], 0.3, 1e-12);
    EXPECT_NEAR(r.pitch_hz[f], 220.0, 1e-9);
  }
}

TEST(ResampleTest, RampUpsampledTwiceStaysARamp) {
  ControlSignals c = random_controls(32, 8);
  for (std::size_t f = 0; f < c.frames(); ++f) c.loudness[f] = 0.5 + 0.25 * static_cast<double>(f);
  const auto r = resample_controls(c, 2 * c.frame_rate);
  for (std::size_t f = 0; f < r.frames(); ++f) {
    const double t = std::min(static_cast<double>(f) / 2.0, 31.0);
    EXPECT_NEAR(r.loudness[f], 0.5 + 0.25 * t, 1e-6);
  }
}

TEST(ResampleTest, PitchDoesNotBlendIntoUnvoiced) {
  ControlSignals c = random_controls(4, 9);
  c.pitch_hz = {200.0, 0.0, 300.0, 300.0};
  const auto r = resample_controls(c, 4 * c.frame_rate);
  for (double p : r.pitch_hz) EXPECT_TRUE(p == 0.0 || p == 200.0 || p >= 300.0 - 1e-9) << p;
}

TEST(NormalizeTest, IdentityStatsOnlyLogPitch) {
  const auto c = random_controls(20, 10);
  const auto n = normalize_controls(c, ControlStats::identity());
  EXPECT_EQ(n.loudness, c.loudness);
  for (std::size_t f = 0; f < c.frames(); ++f) {
    EXPECT_EQ(n.pitch_hz[f], c.pitch_hz[f] > 0 ? std::log(c.pitch_hz[f]) : 0.0);
  }
}

TEST(NormalizeTest, RoundTrip) {
  const auto c = random_controls(50, 11);
  const auto back = denormalize_controls(normalize_controls(c));
  for (std::size_t f = 0; f < c.frames(); ++f) {
    EXPECT_NEAR(back.loudness[f], c.loudness[f], 1e-9);
    EXPECT_NEAR(back.pitch_hz[f], c.pitch_hz[f], 1e-9);
    EXPECT_NEAR(back.centroid_hz[f], c.centroid_hz[f], 1e-9);
    for (int k = 0; k < kNumMfcc; ++k) EXPECT_NEAR(back.mfcc[f][k], c.mfcc[f][k], 1e-9);
  }
}

TEST(NormalizeTest, DefaultStatsNormalizeReferenceCorpus) {
  std::vector<ControlSignals> corpus;
  for (const auto& spec : draw_dataset_specs(64, 2024, DatasetOptions{})) {
    corpus.push_back(normalize_controls(extract_controls(synth_clip(spec))));
  }
  // Stats of the normalized corpus: shift ~ 0, scale ~ 1 on every track.
  const ControlStats s = compute_control_stats(corpus);
  // log_pitch stats of normalized data see the normalized values through
  // another log, so pitch is checked directly below.
  for (const Affine& a : {s.loudness, s.centroid}) {
    EXPECT_NEAR(a.shift, 0.0, 0.2);
    EXPECT_NEAR(a.scale, 1.0, 0.3);
  }
  for (const Affine& a : s.mfcc) {
    EXPECT_NEAR(a.shift, 0.0, 0.2);
    EXPECT_NEAR(a.scale, 1.0, 0.3);
  }
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& c : corpus) {
    // Voiced frames are the ones the raw extractor marked; normalized voiced
    // values are nonzero almost surely.
    for (double p : c.pitch_hz) {
      if (p != 0.0) {
        sum += p;
        sq += p * p;
        ++n;
      }
    }
  }
  ASSERT_GT(n, 100u);
  const double mean = sum / static_cast<double>(n);
  EXPECT_NEAR(mean, 0.0, 0.2);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n) - mean * mean), 1.0, 0.3);
}

TEST(ApcsTest, RoundTripMatchesFloat32Values) {
  TempDir dir;
  const auto c = random_controls(37, 12);
  write_apcs(c, dir / "c.apcs");
  const auto back = read_apcs(dir / "c.apcs");
  ASSERT_EQ(back.frames(), c.frames());
  EXPECT_EQ(back.frame_rate, 62.5);
  const Eigen::MatrixXd a = c.to_matrix();
  const Eigen::MatrixXd b = back.to_matrix();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    EXPECT_EQ(b.data()[i], static_cast<double>(static_cast<float>(a.data()[i])));
  }
}

TEST(ApcsTest, RejectsCorruptFiles) {
  TempDir dir;
  write_apcs(random_controls(5, 13), dir / "c.apcs");
  std::string bytes = testing::slurp(dir / "c.apcs");
  std::ofstream(dir / "short.apcs", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(read_apcs(dir / "short.apcs"), IoError);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.apcs", std::ios::binary) << bytes;
  EXPECT_THROW(read_apcs(dir / "magic.apcs"), IoError);
  EXPECT_THROW(read_apcs(dir / "none.apcs"), IoError);
}

}  // namespace
}  // namespace apalette
