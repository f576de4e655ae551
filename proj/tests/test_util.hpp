// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "apalette/audio_io.hpp"

namespace apalette::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("apalette_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioClip sine(double freq, double seconds, double amp = 1.0, int sr = kDefaultSampleRate) {
  AudioClip c;
  c.sample_rate = sr;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sr));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * i / sr));
  }
  return c;
}

inline AudioClip silence(double seconds, int sr = kDefaultSampleRate) {
  AudioClip c;
  c.sample_rate = sr;
  c.samples.assign(static_cast<std::size_t>(std::lround(seconds * sr)), 0.0f);
  return c;
}

inline AudioClip white_noise(double seconds, double stddev, std::uint64_t seed,
                             int sr = kDefaultSampleRate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, stddev);
  AudioClip c;
  c.sample_rate = sr;
  c.samples.resize(static_cast<std::size_t>(std::lround(seconds * sr)));
  for (auto& s : c.samples) s = static_cast<float>(d(rng));
  return c;
}

}  // namespace apalette::testing
