// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// key=value run configuration shared by the CLI commands. Files hold one
// assignment per line; '#' starts a comment. Command-line flags override the
// file, and the fully resolved set is written next to every output.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "apalette/diffusion.hpp"
#include "apalette/features.hpp"

namespace apalette::cli {

/// Bad flags, unknown keys or malformed values; the CLI exits with 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RunConfig {
 public:
  /// Every known key at its default; `seed` starts unset.
  RunConfig();

  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void set_assignment(const std::string& assignment);

  bool is_set(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t seed() const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Sorted "key=value" lines.
  std::string resolved() const;
  void write(const std::filesystem::path& path) const;

  TrainConfig train_config() const;
  DiTConfig dit_config() const;
  FrameGrid grid() const;
  GuidanceScales scales() const;
  SamplerOptions sampler_options() const;
  double latent_scale() const { return get_double("latent_scale"); }

 private:
  std::map<std::string, std::string> values_;
};

/// Parses "text,loudness,pitch,centroid,timbre" (any subset, or "none").
CondState parse_conditions(const std::string& text);
std::string format_conditions(const CondState& state);

}  // namespace apalette::cli
