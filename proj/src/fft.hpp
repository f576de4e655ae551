// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <span>
#include <vector>

namespace apalette::detail {

/// Real-input forward DFT (unnormalized), bins 0..N/2. Thread-safe; plans
/// are created once per size.
std::vector<std::complex<double>> rfft(std::span<const double> input);

}  // namespace apalette::detail
