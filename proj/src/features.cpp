// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"

namespace apalette {

namespace {

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(n - 1);
  const std::ptrdiff_t period = 2 * last;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i <= last ? i : period - i);
}

void require_clip(const AudioClip& clip, const FrameGrid& grid) {
  grid.validate();
  if (clip.empty()) throw std::invalid_argument("clip is empty");
  if (clip.sample_rate != grid.sample_rate) {
    throw std::invalid_argument("clip sample rate " + std::to_string(clip.sample_rate) +
                                " does not match grid rate " +
                                std::to_string(grid.sample_rate));
  }
}

const std::vector<double>& hann(int n) {
  thread_local std::vector<double> w;
  if (static_cast<int>(w.size()) != n) {
    w.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }
  }
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Orthonormal DCT-II, first `n_out` coefficients.
Mfcc dct_ortho(const Eigen::VectorXd& x) {
  const auto n = static_cast<int>(x.size());
  Mfcc out{};
  for (int k = 0; k < kNumMfcc; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
    out[static_cast<std::size_t>(k)] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return out;
}

double centroid_of(const std::vector<double>& frame, int sample_rate) {
  const std::vector<double>& w = hann(static_cast<int>(frame.size()));
  std::vector<double> windowed(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) windowed[i] = frame[i] * w[i];
  const auto spec = detail::rfft(windowed);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(frame.size());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double mag = std::abs(spec[k]);
    num += static_cast<double>(k) * bin_hz * mag;
    den += mag;
  }
  return den > 0.0 ? num / den : 0.0;
}

Mfcc mfcc_of(const std::vector<double>& frame, const Eigen::MatrixXd& bank) {
  const auto power = power_spectrum(frame);
  const Eigen::Map<const Eigen::VectorXd> p(power.data(), static_cast<Eigen::Index>(power.size()));
  Eigen::VectorXd energies = bank * p;
  for (Eigen::Index i = 0; i < energies.size(); ++i) energies[i] = std::log(energies[i] + kLogFloor);
  return dct_ortho(energies);
}

const Eigen::MatrixXd& cached_bank(int n_bands, int fft_size, int sample_rate) {
  thread_local Eigen::MatrixXd bank;
  thread_local int key[3] = {0, 0, 0};
  if (key[0] != n_bands || key[1] != fft_size || key[2] != sample_rate) {
    bank = mel_filterbank(n_bands, fft_size, sample_rate);
    key[0] = n_bands;
    key[1] = fft_size;
    key[2] = sample_rate;
  }
  return bank;
}

double rms_of(const std::vector<double>& frame) {
  double acc = 0.0;
  for (double v : frame) acc += v * v;
  return std::sqrt(acc / static_cast<double>(frame.size()));
}

template <typename Fn>
auto per_frame(const AudioClip& clip, const FrameGrid& grid, Fn&& fn) {
  require_clip(clip, grid);
  const std::size_t n = grid.frame_count(clip.samples.size());
  std::vector<decltype(fn(std::vector<double>{}))> out;
  out.reserve(n);
  for (std::size_t f = 0; f < n; ++f) out.push_back(fn(frame_at(clip.samples, grid, f)));
  return out;
}

}  // namespace

void FrameGrid::validate() const {
  if (hop_samples <= 0 || hop_samples > win_samples) {
    throw std::invalid_argument("frame grid needs 0 < hop <= win");
  }
  if ((win_samples & (win_samples - 1)) != 0) {
    throw std::invalid_argument("window length must be a power of two");
  }
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
}

void ControlSignals::validate() const {
  const std::size_t n = loudness.size();
  if (pitch_hz.size() != n || centroid_hz.size() != n || mfcc.size() != n) {
    throw std::invalid_argument("control tracks have different frame counts");
  }
  if (!(frame_rate > 0.0)) throw std::invalid_argument("control frame rate must be positive");
  auto finite = [](double v) { return std::isfinite(v); };
  const bool ok = std::all_of(loudness.begin(), loudness.end(), finite) &&
                  std::all_of(pitch_hz.begin(), pitch_hz.end(), finite) &&
                  std::all_of(centroid_hz.begin(), centroid_hz.end(), finite) &&
                  std::all_of(mfcc.begin(), mfcc.end(), [&](const Mfcc& m) {
                    return std::all_of(m.begin(), m.end(), finite);
                  });
  if (!ok) throw std::invalid_argument("control signals contain non-finite values");
}

Eigen::MatrixXd ControlSignals::to_matrix() const {
  validate();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(frames()), kControlChannels);
  for (std::size_t f = 0; f < frames(); ++f) {
    const auto r = static_cast<Eigen::Index>(f);
    m(r, 0) = loudness[f];
    m(r, 1) = pitch_hz[f];
    m(r, 2) = centroid_hz[f];
    for (int k = 0; k < kNumMfcc; ++k) m(r, 3 + k) = mfcc[f][static_cast<std::size_t>(k)];
  }
  return m;
}

ControlSignals ControlSignals::from_matrix(const Eigen::MatrixXd& m, double frame_rate) {
  if (m.cols() != kControlChannels) {
    throw std::invalid_argument("control matrix must have 16 columns");
  }
  ControlSignals c;
  c.frame_rate = frame_rate;
  const auto n = static_cast<std::size_t>(m.rows());
  c.loudness.resize(n);
  c.pitch_hz.resize(n);
  c.centroid_hz.resize(n);
  c.mfcc.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    const auto r = static_cast<Eigen::Index>(f);
    c.loudness[f] = m(r, 0);
    c.pitch_hz[f] = m(r, 1);
    c.centroid_hz[f] = m(r, 2);
    for (int k = 0; k < kNumMfcc; ++k) c.mfcc[f][static_cast<std::size_t>(k)] = m(r, 3 + k);
  }
  return c;
}

std::vector<double> frame_at(std::span<const float> samples, const FrameGrid& grid,
                             std::size_t index) {
  const auto win = static_cast<std::ptrdiff_t>(grid.win_samples);
  const std::ptrdiff_t start =
      static_cast<std::ptrdiff_t>(index) * grid.hop_samples - win / 2;
  std::vector<double> frame(static_cast<std::size_t>(win));
  for (std::ptrdiff_t i = 0; i < win; ++i) {
    frame[static_cast<std::size_t>(i)] = samples[reflect(start + i, samples.size())];
  }
  return frame;
}

std::vector<double> power_spectrum(std::span<const double> frame) {
  const std::vector<double>& w = hann(static_cast<int>(frame.size()));
  std::vector<double> windowed(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) windowed[i] = frame[i] * w[i];
  const auto spec = detail::rfft(windowed);
  std::vector<double> power(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) power[k] = std::norm(spec[k]);
  return power;
}

Eigen::MatrixXd mel_filterbank(int n_bands, int fft_size, int sample_rate) {
  if (n_bands < 1 || fft_size < 2) throw std::invalid_argument("invalid filterbank shape");
  const int n_bins = fft_size / 2 + 1;
  const double mel_max = hz_to_mel(0.5 * sample_rate);
  std::vector<double> edges(static_cast<std::size_t>(n_bands + 2));
  for (int i = 0; i < n_bands + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (n_bands + 1));
  }
  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(n_bands, n_bins);
  for (int m = 0; m < n_bands; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f > lo && f <= mid) {
        bank(m, k) = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        bank(m, k) = (hi - f) / (hi - mid);
      }
    }
  }
  return bank;
}

double yin_pitch(std::span<const double> frame, int sample_rate, double threshold) {
  const std::size_t w = frame.size() / 2;
  const auto tau_min = static_cast<std::size_t>(std::floor(sample_rate / kPitchMaxHz));
  const std::size_t tau_max =
      std::min(w, static_cast<std::size_t>(std::ceil(sample_rate / kPitchMinHz)) + 2);
  if (tau_min < 2 || tau_max <= tau_min + 1) return 0.0;

  // Difference function and its cumulative-mean normalization. Each lag's
  // sample pairs are centred on the frame centre, so a sweeping tone is
  // measured where the frame sits rather than half a window earlier.
  std::vector<double> d(tau_max, 0.0);
  for (std::size_t tau = 1; tau < tau_max; ++tau) {
    const std::size_t start = (frame.size() - w - tau) / 2;
    double acc = 0.0;
    for (std::size_t j = start; j < start + w; ++j) {
      const double diff = frame[j] - frame[j + tau];
      acc += diff * diff;
    }
    d[tau] = acc;
  }
  std::vector<double> cmnd(tau_max, 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau < tau_max; ++tau) {
    running += d[tau];
    cmnd[tau] = running > 0.0 ? d[tau] * static_cast<double>(tau) / running : 1.0;
  }

  std::size_t tau = tau_min;
  for (; tau < tau_max; ++tau) {
    if (cmnd[tau] < threshold) {
      while (tau + 1 < tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
      break;
    }
  }
  if (tau >= tau_max) return 0.0;

  double refined = static_cast<double>(tau);
  if (tau + 1 < tau_max) {
    const double a = cmnd[tau - 1], b = cmnd[tau], c = cmnd[tau + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) refined += 0.5 * (a - c) / denom;
  }
  const double f0 = sample_rate / refined;
  return (f0 >= kPitchMinHz && f0 <= kPitchMaxHz) ? f0 : 0.0;
}

std::vector<double> rms_loudness(const AudioClip& clip, const FrameGrid& grid) {
  return per_frame(clip, grid, [](const std::vector<double>& f) { return rms_of(f); });
}

std::vector<double> pitch_track(const AudioClip& clip, const FrameGrid& grid) {
  return per_frame(clip, grid, [&](const std::vector<double>& f) {
    return yin_pitch(f, grid.sample_rate);
  });
}

std::vector<double> spectral_centroid(const AudioClip& clip, const FrameGrid& grid) {
  return per_frame(clip, grid, [&](const std::vector<double>& f) {
    return centroid_of(f, grid.sample_rate);
  });
}

std::vector<Mfcc> mfcc13(const AudioClip& clip, const FrameGrid& grid) {
  const Eigen::MatrixXd& bank = cached_bank(kNumMelBands, grid.win_samples, grid.sample_rate);
  return per_frame(clip, grid, [&](const std::vector<double>& f) { return mfcc_of(f, bank); });
}

ControlSignals extract_controls(const AudioClip& clip, const FrameGrid& grid) {
  require_clip(clip, grid);
  const Eigen::MatrixXd& bank = cached_bank(kNumMelBands, grid.win_samples, grid.sample_rate);
  ControlSignals c;
  c.frame_rate = grid.frame_rate();
  const std::size_t n = grid.frame_count(clip.samples.size());
  c.loudness.reserve(n);
  c.pitch_hz.reserve(n);
  c.centroid_hz.reserve(n);
  c.mfcc.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    const auto frame = frame_at(clip.samples, grid, f);
    c.loudness.push_back(rms_of(frame));
    c.pitch_hz.push_back(yin_pitch(frame, grid.sample_rate));
    c.centroid_hz.push_back(centroid_of(frame, grid.sample_rate));
    c.mfcc.push_back(mfcc_of(frame, bank));
  }
  return c;
}

std::vector<double> median_filter(std::span<const double> signal, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("median kernel must be odd and >= 1, got " +
                                std::to_string(kernel));
  }
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  std::vector<double> out(signal.begin(), signal.end());
  if (kernel == 1 || n == 0) return out;
  const std::ptrdiff_t half = kernel / 2;
  std::vector<double> window(static_cast<std::size_t>(kernel));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
      const std::ptrdiff_t k = std::clamp<std::ptrdiff_t>(i + j, 0, n - 1);
      window[static_cast<std::size_t>(j + half)] = signal[static_cast<std::size_t>(k)];
    }
    std::nth_element(window.begin(), window.begin() + half, window.end());
    out[static_cast<std::size_t>(i)] = window[static_cast<std::size_t>(half)];
  }
  return out;
}

ControlSignals random_median_filter(const ControlSignals& ctrls, std::mt19937_64& rng,
                                    std::span<const int> kernel_choices) {
  if (kernel_choices.empty()) throw std::invalid_argument("kernel_choices is empty");
  for (int k : kernel_choices) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("median kernels must be odd and >= 1");
  }
  std::uniform_int_distribution<std::size_t> pick(0, kernel_choices.size() - 1);
  const int k_loud = kernel_choices[pick(rng)];
  const int k_pitch = kernel_choices[pick(rng)];
  const int k_cent = kernel_choices[pick(rng)];
  const int k_mfcc = kernel_choices[pick(rng)];

  ControlSignals out;
  out.frame_rate = ctrls.frame_rate;
  out.loudness = median_filter(ctrls.loudness, k_loud);
  out.pitch_hz = median_filter(ctrls.pitch_hz, k_pitch);
  out.centroid_hz = median_filter(ctrls.centroid_hz, k_cent);
  out.mfcc = ctrls.mfcc;
  if (k_mfcc > 1) {
    std::vector<double> coef(ctrls.frames());
    for (int k = 0; k < kNumMfcc; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      for (std::size_t f = 0; f < coef.size(); ++f) coef[f] = ctrls.mfcc[f][ks];
      const auto filtered = median_filter(coef, k_mfcc);
      for (std::size_t f = 0; f < coef.size(); ++f) out.mfcc[f][ks] = filtered[f];
    }
  }
  return out;
}

ControlSignals resample_controls(const ControlSignals& ctrls, double target_rate,
                                 std::optional<std::size_t> n_frames) {
  if (!(target_rate > 0.0)) throw std::invalid_argument("target_rate must be positive");
  ctrls.validate();
  const std::size_t n_src = ctrls.frames();
  if (n_src == 0) throw std::invalid_argument("cannot resample empty controls");
  const double step = ctrls.frame_rate / target_rate;  // source frames per output frame
  const std::size_t n_out =
      n_frames.value_or(static_cast<std::size_t>(std::floor((n_src - 1) / step + 1e-9)) + 1);

  ControlSignals out;
  out.frame_rate = target_rate;
  out.loudness.resize(n_out);
  out.pitch_hz.resize(n_out);
  out.centroid_hz.resize(n_out);
  out.mfcc.resize(n_out);
  const double last = static_cast<double>(n_src - 1);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double pos = std::min(static_cast<double>(k) * step, last);
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, n_src - 1);
    const double a = pos - static_cast<double>(i0);
    auto lerp = [&](double x0, double x1) { return x0 + a * (x1 - x0); };
    out.loudness[k] = lerp(ctrls.loudness[i0], ctrls.loudness[i1]);
    out.centroid_hz[k] = lerp(ctrls.centroid_hz[i0], ctrls.centroid_hz[i1]);
    const double p0 = ctrls.pitch_hz[i0], p1 = ctrls.pitch_hz[i1];
    if ((p0 == 0.0) != (p1 == 0.0)) {
      out.pitch_hz[k] = a < 0.5 ? p0 : p1;
    } else {
      out.pitch_hz[k] = lerp(p0, p1);
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(kNumMfcc); ++c) {
      out.mfcc[k][c] = lerp(ctrls.mfcc[i0][c], ctrls.mfcc[i1][c]);
    }
  }
  return out;
}

void ControlStats::validate() const {
  auto check = [](const Affine& a, const char* what) {
    if (!(a.scale > 0.0) || !std::isfinite(a.scale) || !std::isfinite(a.shift)) {
      throw std::invalid_argument(std::string("control stats for ") + what +
                                  " need a positive finite scale");
    }
  };
  check(loudness, "loudness");
  check(log_pitch, "pitch");
  check(centroid, "centroid");
  for (const auto& m : mfcc) check(m, "mfcc");
}

ControlStats ControlStats::identity() { return ControlStats{}; }

ControlStats ControlStats::defaults() {
  // Mean/std of each track over build_dataset(64, seed=2024) clips with the
  // default grid. DefaultStatsNormalizeReferenceCorpus re-derives them.
  ControlStats s;
  s.loudness = {0.106594, 0.107371};
  s.log_pitch = {6.42875, 0.384193};
  s.centroid = {2620.13, 1277.02};
  s.mfcc = {{{-13.4218, 23.5869},
             {-1.00019, 4.90660},
             {-1.51514, 3.48905},
             {-1.65729, 3.96765},
             {-2.45053, 3.68718},
             {-1.43700, 3.32770},
             {-0.158298, 3.43949},
             {0.191712, 3.09955},
             {0.580599, 2.94924},
             {0.406075, 2.93734},
             {0.196966, 2.66403},
             {0.121260, 2.64875},
             {0.177140, 2.70244}}};
  return s;
}

ControlSignals normalize_controls(const ControlSignals& ctrls, const ControlStats& stats) {
  stats.validate();
  ctrls.validate();
  ControlSignals out = ctrls;
  auto apply = [](double v, const Affine& a) { return (v - a.shift) / a.scale; };
  for (std::size_t f = 0; f < ctrls.frames(); ++f) {
    out.loudness[f] = apply(ctrls.loudness[f], stats.loudness);
    out.centroid_hz[f] = apply(ctrls.centroid_hz[f], stats.centroid);
    const double p = ctrls.pitch_hz[f];
    out.pitch_hz[f] = p > 0.0 ? apply(std::log(p), stats.log_pitch) : 0.0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(kNumMfcc); ++k) {
      out.mfcc[f][k] = apply(ctrls.mfcc[f][k], stats.mfcc[k]);
    }
  }
  return out;
}

ControlSignals denormalize_controls(const ControlSignals& ctrls, const ControlStats& stats) {
  stats.validate();
  ctrls.validate();
  ControlSignals out = ctrls;
  auto undo = [](double v, const Affine& a) { return v * a.scale + a.shift; };
  for (std::size_t f = 0; f < ctrls.frames(); ++f) {
    out.loudness[f] = undo(ctrls.loudness[f], stats.loudness);
    out.centroid_hz[f] = undo(ctrls.centroid_hz[f], stats.centroid);
    const double p = ctrls.pitch_hz[f];
    out.pitch_hz[f] = p != 0.0 ? std::exp(undo(p, stats.log_pitch)) : 0.0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(kNumMfcc); ++k) {
      out.mfcc[f][k] = undo(ctrls.mfcc[f][k], stats.mfcc[k]);
    }
  }
  return out;
}

ControlStats compute_control_stats(std::span<const ControlSignals> corpus) {
  struct Acc {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    void add(double v) {
      sum += v;
      sq += v * v;
      ++n;
    }
    Affine affine() const {
      if (n == 0) return {};
      const double mean = sum / static_cast<double>(n);
      const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
      const double sd = std::sqrt(var);
      return {mean, sd > 1e-12 ? sd : 1.0};
    }
  };
  Acc loud, pitch, cent;
  std::array<Acc, kNumMfcc> mf;
  for (const auto& c : corpus) {
    c.validate();
    for (std::size_t f = 0; f < c.frames(); ++f) {
      loud.add(c.loudness[f]);
      cent.add(c.centroid_hz[f]);
      if (c.pitch_hz[f] > 0.0) pitch.add(std::log(c.pitch_hz[f]));
      for (std::size_t k = 0; k < static_cast<std::size_t>(kNumMfcc); ++k) mf[k].add(c.mfcc[f][k]);
    }
  }
  ControlStats s;
  s.loudness = loud.affine();
  s.log_pitch = pitch.affine();
  s.centroid = cent.affine();
  for (std::size_t k = 0; k < static_cast<std::size_t>(kNumMfcc); ++k) s.mfcc[k] = mf[k].affine();
  return s;
}

}  // namespace apalette
