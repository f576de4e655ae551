// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/eval.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "apalette/checkpoint.hpp"
#include "apalette/parallel.hpp"

namespace apalette {

namespace {

constexpr std::uint64_t kTextMapSeed = 0x434c4150'54455854ull;
constexpr std::uint64_t kAudioMapSeed = 0x434c4150'41554449ull;
constexpr double kClampTolerance = 1e-8;

Eigen::MatrixXd seeded_map(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

const Eigen::MatrixXd& text_map() {
  static const Eigen::MatrixXd m = seeded_map(kEmbedDim, kTextDim, kTextMapSeed);
  return m;
}

const Eigen::MatrixXd& audio_map() {
  static const Eigen::MatrixXd m = seeded_map(kEmbedDim, kEmbedDim, kAudioMapSeed);
  return m;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << std::fixed << v;
  return s.str();
}

std::string fmt(const Correlation& c) { return c.defined ? fmt(c.r) : "NA"; }

}  // namespace

Eigen::VectorXd embed_audio(const AudioClip& clip, const FrameGrid& grid) {
  if (clip.empty()) throw std::invalid_argument("embed_audio: empty clip");
  FrameGrid g = grid;
  g.sample_rate = clip.sample_rate;
  g.validate();
  const Eigen::MatrixXd bank = mel_filterbank(kEmbedBands, g.win_samples, g.sample_rate);
  const std::size_t frames = g.frame_count(clip.samples.size());
  Eigen::MatrixXd logmel(static_cast<Eigen::Index>(frames), kEmbedBands);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto frame = frame_at(clip.samples, g, f);
    const auto power = power_spectrum(frame);
    const Eigen::Map<const Eigen::VectorXd> p(power.data(), static_cast<Eigen::Index>(power.size()));
    const Eigen::VectorXd e = bank * p;
    logmel.row(static_cast<Eigen::Index>(f)) = (e.array() + kLogFloor).log().transpose();
  }
  Eigen::VectorXd out(kEmbedDim);
  const Eigen::RowVectorXd mean = logmel.colwise().mean();
  out.head(kEmbedBands) = mean.transpose();
  const Eigen::MatrixXd centered = logmel.rowwise() - mean;
  out.tail(kEmbedBands) =
      (centered.array().square().colwise().sum() / static_cast<double>(frames)).sqrt().transpose();
  return out;
}

void EmbeddingStats::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("embedding stats: covariance shape does not match mean");
  }
  if (!mean.allFinite() || !cov.allFinite()) throw std::invalid_argument("embedding stats: non-finite");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("embedding stats: covariance is not symmetric");
  }
}

EmbeddingStats fit_gaussian(std::span<const Eigen::VectorXd> embeddings) {
  if (embeddings.size() < 2) throw std::invalid_argument("fit_gaussian needs at least two embeddings");
  const auto d = embeddings.front().size();
  EmbeddingStats s;
  s.n = embeddings.size();
  s.mean = Eigen::VectorXd::Zero(d);
  for (const auto& e : embeddings) {
    if (e.size() != d) throw std::invalid_argument("fit_gaussian: embedding dimensions differ");
    s.mean += e;
  }
  s.mean /= static_cast<double>(s.n);
  s.cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& e : embeddings) {
    const Eigen::VectorXd c = e - s.mean;
    s.cov.noalias() += c * c.transpose();
  }
  s.cov /= static_cast<double>(s.n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sqrtm_psd: matrix is not square");
  if (m.size() == 0) return m;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("sqrtm_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = kClampTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) throw std::invalid_argument("sqrtm_psd: matrix is not positive semi-definite");
    ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  a.validate();
  b.validate();
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd ra = sqrtm_psd(a.cov);
  const Eigen::MatrixXd inner = ra * b.cov * ra;
  const double cross = sqrtm_psd(inner).trace();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

double similarity_score(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("similarity_score: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("similarity_score: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double clap_like(const TextEmbedding& text, const AudioClip& clip) {
  if (text.tokens.cols() != kTextDim) throw std::invalid_argument("clap_like: bad text embedding");
  const Eigen::VectorXd pooled = text.tokens.colwise().mean().transpose();
  return similarity_score(text_map() * pooled, audio_map() * embed_audio(clip));
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  Correlation c;
  c.n = a.size();
  if (c.n < 2) return c;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < c.n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(c.n);
  mb /= static_cast<double>(c.n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < c.n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // Relative test so tracks that are constant up to rounding count as flat.
  const auto flat = [&](double ss, double m) {
    return ss <= 1e-24 * static_cast<double>(c.n) * std::max(1.0, m * m);
  };
  if (flat(saa, ma) || flat(sbb, mb)) return c;
  c.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  c.defined = true;
  return c;
}

Adherence control_adherence(const ControlSignals& target, const ControlSignals& generated) {
  target.validate();
  generated.validate();
  const ControlSignals g = resample_controls(generated, target.frame_rate, target.frames());
  Adherence out;
  out.loudness = pearson(target.loudness, g.loudness);
  out.centroid = pearson(target.centroid_hz, g.centroid_hz);
  std::vector<double> pa, pb;
  for (std::size_t f = 0; f < target.frames(); ++f) {
    if (target.pitch_hz[f] > 0.0 && g.pitch_hz[f] > 0.0) {
      pa.push_back(target.pitch_hz[f]);
      pb.push_back(g.pitch_hz[f]);
    }
  }
  out.pitch = pearson(pa, pb);
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> ta(target.frames()), ga(target.frames());
  for (std::size_t k = 0; k < static_cast<std::size_t>(kNumMfcc); ++k) {
    for (std::size_t f = 0; f < target.frames(); ++f) {
      ta[f] = target.mfcc[f][k];
      ga[f] = g.mfcc[f][k];
    }
    const Correlation c = pearson(ta, ga);
    if (c.defined) {
      sum += c.r;
      ++defined;
    }
  }
  out.mfcc.n = target.frames();
  if (defined > 0) {
    out.mfcc.r = sum / static_cast<double>(defined);
    out.mfcc.defined = true;
  }
  return out;
}

Adherence control_adherence(const ControlSignals& target, const AudioClip& generated,
                            const FrameGrid& grid) {
  FrameGrid g = grid;
  g.sample_rate = generated.sample_rate;
  return control_adherence(target, extract_controls(generated, g));
}

std::vector<EvalClip> load_eval_clips(const DatasetManifest& manifest, const FrameGrid& grid) {
  std::vector<EvalClip> out(manifest.entries.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    out[i].audio = read_wav(manifest.resolve(e));
    out[i].caption = e.caption;
    FrameGrid g = grid;
    g.sample_rate = out[i].audio.sample_rate;
    out[i].controls = extract_controls(out[i].audio, g);
  });
  return out;
}

EvalReport evaluate_model(const DiTModel<float>& model, std::span<const EvalClip> references,
                          const CondState& enabled, const AblationOptions& options,
                          const std::string& label) {
  if (references.size() < 2) throw std::invalid_argument("evaluation needs at least two reference clips");
  const FrameGrid& grid = options.grid;
  SamplerOptions so;
  so.steps = options.sampler_steps;
  so.cfg_mode = options.cfg_mode;
  so.enabled = enabled;

  const std::size_t n = references.size();
  std::vector<Eigen::VectorXd> real(n), fake(n);
  std::vector<double> clap(n);
  std::vector<Adherence> adh(n);
  parallel_for(n, [&](std::size_t i) {
    const EvalClip& ref = references[i];
    if (ref.audio.sample_rate != kDefaultSampleRate) {
      throw std::invalid_argument("reference clips must be 16 kHz");
    }
    const std::size_t frames = latent_frames_for(ref.audio.samples.size());
    const double rate = FrameStackCodec{}.latent_rate(ref.audio.sample_rate);
    const TextEmbedding text = embed_text(ref.caption);
    const Mat<double> ctrls = prepare_controls(ref.controls, rate, frames);
    const Mat<float> z = sample(model, text, ctrls, options.scales, frames, so,
                                options.seed + 0x9e3779b97f4a7c15ull * (i + 1));
    const AudioClip gen = decode(from_model_latents(z, ref.audio.samples.size(),
                                                    ref.audio.sample_rate, options.latent_scale));
    real[i] = embed_audio(ref.audio, grid);
    fake[i] = embed_audio(gen, grid);
    clap[i] = text.is_null ? 0.0 : clap_like(text, gen);
    adh[i] = control_adherence(ref.controls, gen, grid);
  });

  EvalReport r;
  r.config = label;
  r.fad = frechet_distance(fit_gaussian(real), fit_gaussian(fake));
  for (double c : clap) r.clap_like += c / static_cast<double>(n);
  // Per-track mean of the clips where the correlation is defined.
  const auto average = [&](Correlation Adherence::*track) {
    Correlation c;
    double sum = 0.0;
    for (const auto& a : adh) {
      if ((a.*track).defined) {
        sum += (a.*track).r;
        ++c.n;
      }
    }
    if (c.n > 0) {
      c.r = sum / static_cast<double>(c.n);
      c.defined = true;
    }
    return c;
  };
  r.adherence.loudness = average(&Adherence::loudness);
  r.adherence.pitch = average(&Adherence::pitch);
  r.adherence.centroid = average(&Adherence::centroid);
  r.adherence.mfcc = average(&Adherence::mfcc);
  return r;
}

std::vector<EvalReport> run_ablation(const std::filesystem::path& base_checkpoint,
                                     std::span<const std::filesystem::path> adapters,
                                     std::span<const EvalClip> references,
                                     const AblationOptions& options) {
  if (adapters.size() != kAblationConfigs.size()) {
    throw std::invalid_argument("ablation needs one adapter checkpoint per configuration (4)");
  }
  for (const auto& p : adapters) {
    if (!std::filesystem::is_regular_file(p)) throw IoError(p.string() + ": checkpoint not found");
  }
  const DiTModel<float> base = load_base(base_checkpoint);
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    DiTModel<float> model = base;
    load_adapters(model, adapters[i]);
    reports.push_back(evaluate_model(model, references, kAblationConfigs[i].enabled, options,
                                     kAblationConfigs[i].label));
  }
  return reports;
}

std::string format_report_tsv(std::span<const EvalReport> reports) {
  std::ostringstream s;
  s << "config\tfad\tclap_like\tr_loud\tr_pitch\tr_centroid\tr_mfcc\n";
  for (const auto& r : reports) {
    if (r.config.find_first_of("\t\n") != std::string::npos) {
      throw std::invalid_argument("report config label contains a tab or newline");
    }
    s << r.config << '\t' << fmt(r.fad) << '\t' << fmt(r.clap_like) << '\t'
      << fmt(r.adherence.loudness) << '\t' << fmt(r.adherence.pitch) << '\t'
      << fmt(r.adherence.centroid) << '\t' << fmt(r.adherence.mfcc) << '\n';
  }
  return s.str();
}

void write_report_tsv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  const std::string text = format_report_tsv(reports);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace apalette
