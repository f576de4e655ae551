// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>

#include "apalette/byte_io.hpp"
#include "apalette/features.hpp"

namespace apalette {

namespace {
constexpr std::uint32_t kApcsVersion = 1;
}  // namespace

void write_apcs(const ControlSignals& ctrls, const std::filesystem::path& path) {
  const Eigen::MatrixXd m = ctrls.to_matrix();
  ByteWriter w;
  w.tag("APCS");
  w.u32(kApcsVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(kControlChannels);
  w.f32(static_cast<float>(ctrls.frame_rate));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

ControlSignals read_apcs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    ByteReader r(bytes);
    if (r.tag() != "APCS") throw IoError(path.string() + ": bad magic, not an APCS file");
    const std::uint32_t version = r.u32();
    if (version != kApcsVersion) {
      throw IoError(path.string() + ": unsupported APCS version " + std::to_string(version));
    }
    const std::uint32_t frames = r.u32();
    const std::uint32_t layout = r.u32();
    if (layout != kControlChannels) {
      throw IoError(path.string() + ": unsupported track layout " + std::to_string(layout));
    }
    const double rate = r.f32();
    if (!(rate > 0.0)) throw IoError(path.string() + ": frame rate must be positive");
    if (r.remaining() != static_cast<std::size_t>(frames) * kControlChannels * 4) {
      throw IoError(path.string() + ": payload size does not match frame count");
    }
    Eigen::MatrixXd m(frames, kControlChannels);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = r.f32();
    }
    auto ctrls = ControlSignals::from_matrix(m, rate);
    ctrls.validate();
    return ctrls;
  } catch (const std::out_of_range&) {
    throw IoError(path.string() + ": truncated APCS file");
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace apalette
