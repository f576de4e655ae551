// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "apalette/audio_io.hpp"
#include "apalette/byte_io.hpp"

namespace apalette {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

std::string describe(const std::filesystem::path& path, const std::string& what) {
  return path.string() + ": " + what;
}

}  // namespace

WavEncoding parse_wav_encoding(const std::string& name) {
  if (name == "pcm16") return WavEncoding::kPcm16;
  if (name == "float32") return WavEncoding::kFloat32;
  throw std::invalid_argument("unknown wav encoding '" + name +
                              "' (expected pcm16 or float32)");
}

static AudioClip read_wav_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(describe(path, "cannot open for reading"));
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  ByteReader reader(bytes);

  if (reader.remaining() < 12 || reader.tag() != "RIFF") {
    throw IoError(describe(path, "not a RIFF file"));
  }
  reader.u32();  // riff size; trust the chunk walk instead
  if (reader.tag() != "WAVE") throw IoError(describe(path, "RIFF type is not WAVE"));

  FmtChunk fmt;
  bool have_fmt = false;
  const char* data = nullptr;
  std::size_t data_size = 0;
  while (reader.remaining() >= 8) {
    const std::string id = reader.tag();
    const std::uint32_t size = reader.u32();
    if (size > reader.remaining()) {
      if (id != "data") throw IoError(describe(path, "truncated '" + id + "' chunk"));
    }
    const std::size_t avail = std::min<std::size_t>(size, reader.remaining());
    if (id == "fmt ") {
      if (size < 16) throw IoError(describe(path, "fmt chunk too short"));
      ByteReader f(reader.peek(avail), avail);
      fmt.format = f.u16();
      fmt.channels = f.u16();
      fmt.sample_rate = f.u32();
      f.u32();  // byte rate
      f.u16();  // block align
      fmt.bits = f.u16();
      if (fmt.format == kFormatExtensible && size >= 26) {
        f.u16();  // cbSize
        f.u16();  // valid bits
        f.u32();  // channel mask
        fmt.format = f.u16();  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data = reader.peek(avail);
      data_size = avail;
    }
    reader.skip(avail + (avail & 1u));
    if (data && have_fmt) break;
  }
  if (!have_fmt) throw IoError(describe(path, "missing fmt chunk"));
  if (!data) throw IoError(describe(path, "missing data chunk"));
  if (fmt.channels != 1) {
    throw IoError(describe(path, "unsupported channel count " +
                                     std::to_string(fmt.channels) + " (mono only)"));
  }
  if (fmt.sample_rate == 0) throw IoError(describe(path, "sample rate is 0"));

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  ByteReader d(data, data_size);
  if (fmt.format == kFormatPcm && fmt.bits == 16) {
    clip.samples.resize(data_size / 2);
    for (auto& s : clip.samples) s = static_cast<float>(d.i16()) / 32768.0f;
  } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
    clip.samples.resize(data_size / 4);
    for (auto& s : clip.samples) {
      s = d.f32();
      if (!std::isfinite(s)) throw IoError(describe(path, "non-finite sample"));
    }
  } else {
    throw IoError(describe(path, "unsupported encoding: format tag " +
                                     std::to_string(fmt.format) + ", " +
                                     std::to_string(fmt.bits) + " bits per sample"));
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  try {
    return read_wav_bytes(path);
  } catch (const std::out_of_range&) {
    throw IoError(describe(path, "truncated file"));
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding) {
  if (clip.sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
  for (float s : clip.samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("cannot write non-finite samples");
  }
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint16_t block_align = bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * block_align);

  ByteWriter w;
  w.tag("RIFF");
  w.u32(36 + data_bytes);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(format);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * block_align);
  w.u16(block_align);
  w.u16(bits);
  w.tag("data");
  w.u32(data_bytes);
  if (encoding == WavEncoding::kPcm16) {
    for (float s : clip.samples) {
      const double q = std::nearbyint(static_cast<double>(s) * 32768.0);
      w.i16(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0)));
    }
  } else {
    for (float s : clip.samples) w.f32(s);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(describe(path, "cannot open for writing"));
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError(describe(path, "write failed"));
}

}  // namespace apalette
