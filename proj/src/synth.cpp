// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "apalette/audio_io.hpp"

namespace apalette {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Background hiss present in every clip, like a quiet recording room.
constexpr double kNoiseFloor = 1e-3;

struct KindInfo {
  SoundKind kind;
  const char* name;
};

constexpr KindInfo kKinds[] = {
    {SoundKind::kFootsteps, "footsteps"}, {SoundKind::kSiren, "siren"},
    {SoundKind::kRain, "rain"},           {SoundKind::kBark, "bark"},
    {SoundKind::kChirp, "chirp"},
};

const std::map<std::string, double>& defaults(SoundKind kind) {
  static const std::map<std::string, double> footsteps{
      {"rate", 2.0}, {"decay", 0.05}, {"cutoff", 1200.0}};
  static const std::map<std::string, double> siren{{"f_start", 400.0}, {"f_end", 800.0}};
  static const std::map<std::string, double> rain{
      {"cutoff", 3000.0}, {"density", 30.0}, {"swell", 0.5}};
  static const std::map<std::string, double> bark{
      {"f0", 450.0}, {"rate", 2.0}, {"formant", 1200.0}};
  static const std::map<std::string, double> chirp{
      {"f_low", 2000.0}, {"f_high", 4000.0}, {"rate", 4.0}};
  switch (kind) {
    case SoundKind::kFootsteps: return footsteps;
    case SoundKind::kSiren: return siren;
    case SoundKind::kRain: return rain;
    case SoundKind::kBark: return bark;
    case SoundKind::kChirp: return chirp;
  }
  throw std::invalid_argument("unknown sound kind");
}

bool is_frequency_param(const std::string& key) {
  return key == "cutoff" || key == "formant" || key.starts_with("f_") || key == "f0";
}

/// One-pole low-pass, y += a (x - y).
class OnePole {
 public:
  OnePole(double cutoff_hz, int sample_rate)
      : a_(1.0 - std::exp(-kTwoPi * cutoff_hz / sample_rate)) {}
  double operator()(double x) { return y_ += a_ * (x - y_); }

 private:
  double a_;
  double y_ = 0.0;
};

/// Two-pole resonator (constant peak gain form).
class Resonator {
 public:
  Resonator(double freq_hz, double bandwidth_hz, int sample_rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / sample_rate);
    b1_ = 2.0 * r * std::cos(kTwoPi * freq_hz / sample_rate);
    b2_ = -r * r;
    g_ = 1.0 - r;
  }
  double operator()(double x) {
    const double y = g_ * x + b1_ * y1_ + b2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b1_, b2_, g_;
  double y1_ = 0.0, y2_ = 0.0;
};

void render_footsteps(const SynthSpec& spec, std::mt19937_64& rng, std::vector<double>& out) {
  const int sr = spec.sample_rate;
  const double rate = spec.param("rate");
  const double decay = spec.param("decay");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  OnePole lp(spec.param("cutoff"), sr);
  OnePole lp2(spec.param("cutoff"), sr);

  const double period = 1.0 / rate;
  double t_step = 0.1 * period + 0.2 * period * uni(rng);
  std::vector<double> env(out.size(), 0.0);
  while (t_step < spec.duration) {
    const double gain = 0.6 + 0.3 * uni(rng);
    const auto start = static_cast<std::size_t>(t_step * sr);
    const auto len = static_cast<std::size_t>(6.0 * decay * sr);
    for (std::size_t i = 0; i < len && start + i < env.size(); ++i) {
      const double t = static_cast<double>(i) / sr;
      // 2 ms attack avoids a click, then the heel thump decays.
      env[start + i] += gain * std::min(1.0, t / 0.002) * std::exp(-t / decay);
    }
    t_step += period * (0.95 + 0.1 * uni(rng));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.8 * env[i] * lp2(lp(noise(rng)));
  }
}

void render_siren(const SynthSpec& spec, std::mt19937_64&, std::vector<double>& out) {
  const int sr = spec.sample_rate;
  const double f0 = spec.param("f_start");
  const double f1 = spec.param("f_end");
  const double n = static_cast<double>(out.size());
  double phase = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = static_cast<double>(i) / n;
    const double f = f0 + (f1 - f0) * u;
    // Pass-by swell plus a short fade at both ends.
    const double swell = 0.3 + 0.7 * std::sin(std::numbers::pi * u);
    const double t = static_cast<double>(i) / sr;
    const double fade = std::min({1.0, t / 0.01, (spec.duration - t) / 0.01});
    out[i] = 0.5 * swell * fade * std::sin(phase);
    phase += kTwoPi * f / sr;
    if (phase > kTwoPi) phase -= kTwoPi;
  }
}

void render_rain(const SynthSpec& spec, std::mt19937_64& rng, std::vector<double>& out) {
  const int sr = spec.sample_rate;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  OnePole lp(spec.param("cutoff"), sr);
  const double swell_hz = spec.param("swell");
  const double swell_phase = kTwoPi * uni(rng);
  const double drop_prob = spec.param("density") / sr;
  double drop_env = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    const double level = 0.12 * (0.6 + 0.4 * std::sin(kTwoPi * swell_hz * t + swell_phase));
    if (uni(rng) < drop_prob) drop_env = 0.2 + 0.3 * uni(rng);
    drop_env *= 0.996;
    const double w = noise(rng);
    out[i] = level * 1.4 * lp(w) + drop_env * w * 0.25;
  }
}

void render_bark(const SynthSpec& spec, std::mt19937_64& rng, std::vector<double>& out) {
  const int sr = spec.sample_rate;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double f0 = spec.param("f0");
  const double period = 1.0 / spec.param("rate");
  Resonator formant(spec.param("formant"), 300.0, sr);
  const double bark_len = 0.15;
  const double nyquist = 0.5 * sr;

  std::vector<double> src(out.size(), 0.0);
  double t_bark = 0.05 + 0.2 * period * uni(rng);
  while (t_bark < spec.duration) {
    const double gain = 0.7 + 0.3 * uni(rng);
    const auto start = static_cast<std::size_t>(t_bark * sr);
    const auto len = static_cast<std::size_t>(bark_len * sr);
    double phase = 0.0;
    for (std::size_t i = 0; i < len && start + i < src.size(); ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double f = f0 * (1.1 - 0.2 * u);  // falls through the bark
      // Fast attack, growl-rate amplitude modulation, decaying tail.
      const double env = std::min(1.0, u / 0.05) * std::exp(-3.0 * u) *
                         (0.75 + 0.25 * std::sin(kTwoPi * 30.0 * u * bark_len));
      double v = 0.0;
      for (int k = 1; k * f < nyquist && k <= 12; ++k) v += std::sin(k * phase) / k;
      src[start + i] += gain * env * v;
      phase += kTwoPi * f / sr;
    }
    t_bark += period * (0.9 + 0.2 * uni(rng));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.12 * src[i] + 0.8 * formant(src[i]);
  }
}

void render_chirp(const SynthSpec& spec, std::mt19937_64& rng, std::vector<double>& out) {
  const int sr = spec.sample_rate;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double lo = spec.param("f_low");
  const double hi = spec.param("f_high");
  const double period = 1.0 / spec.param("rate");
  const double chirp_len = std::min(0.08, 0.6 * period);
  double t_chirp = 0.05 + 0.3 * period * uni(rng);
  while (t_chirp < spec.duration) {
    const double gain = 0.3 + 0.15 * uni(rng);
    const auto start = static_cast<std::size_t>(t_chirp * sr);
    const auto len = static_cast<std::size_t>(chirp_len * sr);
    double phase = 0.0;
    for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double f = lo + (hi - lo) * u;
      const double env = 0.5 - 0.5 * std::cos(kTwoPi * u);
      out[start + i] += gain * env * std::sin(phase);
      phase += kTwoPi * f / sr;
    }
    t_chirp += period * (0.85 + 0.3 * uni(rng));
  }
}

std::string fmt_hz(double hz) {
  std::ostringstream os;
  os << static_cast<long>(std::lround(hz)) << " hz";
  return os.str();
}

}  // namespace

const char* kind_name(SoundKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  throw std::invalid_argument("unknown sound kind");
}

SoundKind parse_kind(const std::string& name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  throw std::invalid_argument("unknown sound kind '" + name + "'");
}

double SynthSpec::param(const std::string& key) const {
  if (auto it = params.find(key); it != params.end()) return it->second;
  const auto& d = defaults(kind);
  if (auto it = d.find(key); it != d.end()) return it->second;
  throw std::invalid_argument(std::string("no parameter '") + key + "' for kind " +
                              kind_name(kind));
}

AudioClip synth_clip(const SynthSpec& spec) {
  if (!(spec.duration > 0.0)) throw std::invalid_argument("duration must be positive");
  if (spec.sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
  const auto& known = defaults(spec.kind);
  for (const auto& [key, value] : spec.params) {
    if (!known.contains(key)) {
      throw std::invalid_argument("unknown parameter '" + key + "' for kind " +
                                  kind_name(spec.kind));
    }
    if (!std::isfinite(value) || value <= 0.0) {
      throw std::invalid_argument("parameter '" + key + "' must be positive");
    }
    if (is_frequency_param(key) && value >= 0.5 * spec.sample_rate) {
      throw std::invalid_argument("frequency parameter '" + key + "' must be below Nyquist");
    }
  }

  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  std::vector<double> buf(n, 0.0);
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case SoundKind::kFootsteps: render_footsteps(spec, rng, buf); break;
    case SoundKind::kSiren: render_siren(spec, rng, buf); break;
    case SoundKind::kRain: render_rain(spec, rng, buf); break;
    case SoundKind::kBark: render_bark(spec, rng, buf); break;
    case SoundKind::kChirp: render_chirp(spec, rng, buf); break;
  }

  std::normal_distribution<double> hiss(0.0, kNoiseFloor);
  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = static_cast<float>(std::clamp(buf[i] + hiss(rng), -1.0, 1.0));
  }
  return clip;
}

std::string caption_for(const SynthSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case SoundKind::kFootsteps: {
      const double rate = spec.param("rate");
      os << "footsteps walking "
         << (rate < 2.0 ? "slowly" : rate < 3.0 ? "steadily" : "quickly");
      break;
    }
    case SoundKind::kSiren: {
      const double f0 = spec.param("f_start");
      const double f1 = spec.param("f_end");
      os << "a siren with a " << (f1 >= f0 ? "rising" : "falling") << " pitch from "
         << fmt_hz(f0) << " to " << fmt_hz(f1);
      break;
    }
    case SoundKind::kRain: {
      const double density = spec.param("density");
      os << (density < 20.0 ? "light" : density < 40.0 ? "steady" : "heavy")
         << " rain falling";
      break;
    }
    case SoundKind::kBark: {
      const double f0 = spec.param("f0");
      os << "a " << (f0 < 400.0 ? "large" : "small") << " dog barking";
      break;
    }
    case SoundKind::kChirp: {
      const double rate = spec.param("rate");
      os << "a bird chirping " << (rate < 4.0 ? "slowly" : "rapidly");
      break;
    }
  }
  return os.str();
}

}  // namespace apalette
