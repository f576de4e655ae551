// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor container used for model files:
//
//   "APCK" u32 version=1
//   u32 kind (0 base, 1 adapters)
//   u32 metadata byte count, then "key=value\n" lines
//   u32 tensor count, then per tensor:
//     u32 name length, name, u32 ndim, u64 dims[ndim], f32 values (row-major)
//
// All integers and floats are little-endian.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "apalette/dit.hpp"

namespace apalette {

using Metadata = std::map<std::string, std::string>;

enum class CheckpointKind : std::uint32_t { kBase = 0, kAdapters = 1 };

/// Frozen base weights plus the control projection's starting point. The
/// model config goes into the metadata alongside `extra`.
void save_base(const DiTModel<float>& model, const std::filesystem::path& path,
               const Metadata& extra = {});
DiTModel<float> load_base(const std::filesystem::path& path, Metadata* metadata = nullptr);

/// A/B/alpha of every adapter site and the trained control projection.
/// Throws std::logic_error for merged adapters.
void save_adapters(const DiTModel<float>& model, const std::filesystem::path& path,
                   const Metadata& extra = {});
/// Attaches (or overwrites) adapters on `model` from the file. The stored
/// config must match the model's.
void load_adapters(DiTModel<float>& model, const std::filesystem::path& path,
                   Metadata* metadata = nullptr);

Metadata config_metadata(const DiTConfig& config);
DiTConfig config_from_metadata(const Metadata& metadata);

}  // namespace apalette
