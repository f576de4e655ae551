// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "apalette/audio_io.hpp"

namespace apalette {

namespace {

double draw(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Rounded so captions and manifests stay short and stable.
double round_to(double v, double step) { return std::round(v / step) * step; }

SynthSpec draw_spec(SoundKind kind, std::mt19937_64& rng, const DatasetOptions& opt) {
  SynthSpec spec;
  spec.kind = kind;
  spec.sample_rate = opt.sample_rate;
  spec.duration = std::max(opt.min_duration,
                           round_to(draw(rng, opt.min_duration, opt.max_duration), 0.25));
  spec.duration = std::min(spec.duration, opt.max_duration);
  switch (kind) {
    case SoundKind::kFootsteps:
      spec.params = {{"rate", round_to(draw(rng, 1.5, 4.0), 0.1)},
                     {"decay", round_to(draw(rng, 0.03, 0.08), 0.005)},
                     {"cutoff", round_to(draw(rng, 600.0, 2000.0), 10.0)}};
      break;
    case SoundKind::kSiren: {
      double a = round_to(draw(rng, 200.0, 500.0), 10.0);
      double b = round_to(draw(rng, 600.0, 1200.0), 10.0);
      if (draw(rng, 0.0, 1.0) < 0.5) std::swap(a, b);
      spec.params = {{"f_start", a}, {"f_end", b}};
      break;
    }
    case SoundKind::kRain:
      spec.params = {{"cutoff", round_to(draw(rng, 1500.0, 5000.0), 10.0)},
                     {"density", round_to(draw(rng, 10.0, 60.0), 1.0)},
                     {"swell", round_to(draw(rng, 0.3, 1.5), 0.1)}};
      break;
    case SoundKind::kBark:
      spec.params = {{"f0", round_to(draw(rng, 250.0, 700.0), 10.0)},
                     {"rate", round_to(draw(rng, 1.5, 3.5), 0.1)},
                     {"formant", round_to(draw(rng, 800.0, 2000.0), 10.0)}};
      break;
    case SoundKind::kChirp: {
      const double lo = round_to(draw(rng, 1500.0, 3000.0), 10.0);
      spec.params = {{"f_low", lo},
                     {"f_high", lo + round_to(draw(rng, 800.0, 2500.0), 10.0)},
                     {"rate", round_to(draw(rng, 2.0, 6.0), 0.1)}};
      break;
    }
  }
  spec.seed = rng();
  return spec;
}

std::string clip_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clips/%04d.wav", i);
  return buf;
}

}  // namespace

std::vector<SynthSpec> draw_dataset_specs(int n_clips, std::uint64_t seed,
                                          const DatasetOptions& options) {
  if (n_clips < 1) throw std::invalid_argument("n_clips must be >= 1");
  if (!(options.min_duration > 0.0) || options.max_duration < options.min_duration) {
    throw std::invalid_argument("invalid duration range");
  }
  constexpr SoundKind kOrder[] = {SoundKind::kFootsteps, SoundKind::kSiren, SoundKind::kRain,
                                  SoundKind::kBark, SoundKind::kChirp};
  std::mt19937_64 rng(seed);
  // Kinds cycle from a seeded offset so small sets still cover every class.
  const auto offset = static_cast<int>(rng() % 5);
  std::vector<SynthSpec> specs;
  specs.reserve(static_cast<std::size_t>(n_clips));
  for (int i = 0; i < n_clips; ++i) {
    specs.push_back(draw_spec(kOrder[(i + offset) % 5], rng, options));
  }
  return specs;
}

DatasetManifest build_dataset(int n_clips, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const DatasetOptions& options) {
  const auto specs = draw_dataset_specs(n_clips, seed, options);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clips", ec);
  if (ec) throw IoError(out_dir.string() + ": cannot create directory: " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  for (int i = 0; i < n_clips; ++i) {
    const auto& spec = specs[static_cast<std::size_t>(i)];
    ManifestEntry entry{clip_name(i), caption_for(spec), kind_name(spec.kind)};
    write_wav(synth_clip(spec), out_dir / entry.audio_path, options.encoding);
    manifest.entries.push_back(std::move(entry));
  }
  write_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::set<std::string> seen;
  std::ostringstream os;
  for (const auto& e : manifest.entries) {
    if (e.caption.empty()) throw std::invalid_argument("empty caption for " + e.audio_path);
    if (!seen.insert(e.audio_path).second) {
      throw std::invalid_argument("duplicate manifest path " + e.audio_path);
    }
    for (const auto* field : {&e.audio_path, &e.caption, &e.tag}) {
      if (field->find_first_of("\t\n") != std::string::npos) {
        throw std::invalid_argument("manifest field contains tab or newline: " + *field);
      }
    }
    os << e.audio_path << '\t' << e.caption << '\t' << e.tag << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << os.str();
  if (!out) throw IoError(path.string() + ": write failed");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 3) throw IoError(where + ": expected 3 tab-separated fields");
    if (fields[1].empty()) throw IoError(where + ": empty caption");
    if (!seen.insert(fields[0]).second) throw IoError(where + ": duplicate path " + fields[0]);
    manifest.entries.push_back({fields[0], fields[1], fields[2]});
  }
  return manifest;
}

}  // namespace apalette
