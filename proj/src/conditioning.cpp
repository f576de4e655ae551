// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/conditioning.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

namespace apalette {

namespace {

constexpr std::uint64_t kTextSalt = 0x41505445'58543031ull;  // "APTEXT01"

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Vec<double> token_vector(const std::string& token) {
  std::mt19937_64 rng(fnv1a(token) ^ kTextSalt);
  Vec<double> v = randn_vec<double>(kTextDim, 1.0, rng);
  return v / v.norm();
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
  }
}

}  // namespace

TextEmbedding TextEmbedding::null() {
  TextEmbedding e;
  e.tokens = Mat<double>::Zero(1, kTextDim);
  e.is_null = true;
  return e;
}

TextEmbedding embed_text(const std::string& caption) {
  std::istringstream in(caption);
  std::vector<std::string> words;
  for (std::string w; in >> w;) {
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    words.push_back(std::move(w));
  }
  if (words.empty()) return TextEmbedding::null();
  TextEmbedding e;
  e.is_null = false;
  e.tokens.resize(static_cast<Eigen::Index>(words.size()), kTextDim);
  for (std::size_t i = 0; i < words.size(); ++i) {
    e.tokens.row(static_cast<Eigen::Index>(i)) = token_vector(words[i]).transpose();
  }
  return e;
}

template <typename T>
ProjectionWeights<T> ProjectionWeights<T>::init(std::mt19937_64& rng, double stddev) {
  ProjectionWeights p;
  p.W = randn<T>(kControlChannels, kLatentChannels, stddev, rng);
  p.b = Vec<T>::Zero(kLatentChannels);
  return p;
}

void apply_mask(Mat<double>& ctrls, const CondState& mask) {
  if (ctrls.cols() != kControlChannels) {
    throw std::invalid_argument("control matrix must have 16 channels");
  }
  if (!mask.loudness) ctrls.col(0).setZero();
  if (!mask.pitch) ctrls.col(1).setZero();
  if (!mask.centroid) ctrls.col(2).setZero();
  if (!mask.timbre) ctrls.rightCols(kNumMfcc).setZero();
}

template <typename T>
Mat<T> project_controls(const Mat<double>& ctrls, const ProjectionWeights<T>& weights,
                        const CondState& mask, std::size_t n_latent_frames) {
  if (static_cast<std::size_t>(ctrls.rows()) != n_latent_frames) {
    throw std::invalid_argument("control frames (" + std::to_string(ctrls.rows()) +
                                ") do not match latent frames (" +
                                std::to_string(n_latent_frames) + ")");
  }
  Mat<double> masked = ctrls;
  apply_mask(masked, mask);
  Mat<T> out = masked.cast<T>() * weights.W;
  out.rowwise() += weights.b.transpose();
  return out;
}

template <typename T>
void project_controls_backward(const Mat<double>& ctrls, const CondState& mask,
                               const Mat<T>& d_embedding, ProjectionWeights<T>& grads) {
  Mat<double> masked = ctrls;
  apply_mask(masked, mask);
  grads.W.noalias() += masked.cast<T>().transpose() * d_embedding;
  grads.b += d_embedding.colwise().sum().transpose();
}

template <typename T>
Mat<T> fuse(const Mat<T>& z, const Mat<T>& ctrl_embedding) {
  if (z.rows() != ctrl_embedding.rows() || z.cols() != ctrl_embedding.cols()) {
    throw std::invalid_argument("fuse: shape mismatch");
  }
  return z + ctrl_embedding;
}

CondState sample_dropout(std::mt19937_64& rng, double p_text, double p_dyn, double p_timbre,
                         bool per_signal) {
  check_probability(p_text, "p_text");
  check_probability(p_dyn, "p_dyn");
  check_probability(p_timbre, "p_timbre");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // u < p drops, so p = 0 never drops and p = 1 always does.
  CondState s;
  s.text = !(u(rng) < p_text);
  if (per_signal) {
    s.loudness = !(u(rng) < p_dyn);
    s.pitch = !(u(rng) < p_dyn);
    s.centroid = !(u(rng) < p_dyn);
  } else {
    const bool keep = !(u(rng) < p_dyn);
    s.loudness = s.pitch = s.centroid = keep;
  }
  s.timbre = !(u(rng) < p_timbre);
  return s;
}

Mat<double> prepare_controls(const ControlSignals& raw, double latent_rate,
                             std::size_t n_frames, const ControlStats& stats) {
  const auto resampled = resample_controls(raw, latent_rate, n_frames);
  const Eigen::MatrixXd m = normalize_controls(resampled, stats).to_matrix();
  return Mat<double>(m);
}

#define APALETTE_INSTANTIATE(T)                                                          \
  template struct ProjectionWeights<T>;                                                  \
  template Mat<T> project_controls(const Mat<double>&, const ProjectionWeights<T>&,     \
                                   const CondState&, std::size_t);                       \
  template void project_controls_backward(const Mat<double>&, const CondState&,         \
                                          const Mat<T>&, ProjectionWeights<T>&);         \
  template Mat<T> fuse(const Mat<T>&, const Mat<T>&);

APALETTE_INSTANTIATE(float)
APALETTE_INSTANTIATE(double)
#undef APALETTE_INSTANTIATE

}  // namespace apalette
