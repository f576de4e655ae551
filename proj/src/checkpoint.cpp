// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "apalette/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "apalette/audio_io.hpp"
#include "apalette/byte_io.hpp"

namespace apalette {

namespace {

constexpr std::uint32_t kVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

struct Container {
  CheckpointKind kind = CheckpointKind::kBase;
  Metadata meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name, const std::filesystem::path& path) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw IoError(path.string() + ": missing tensor '" + name + "'");
  }
};

void write_container(const Container& c, const std::filesystem::path& path) {
  ByteWriter w;
  w.tag("APCK");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(c.kind));
  std::string meta;
  for (const auto& [k, v] : c.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("metadata keys/values may not contain '=' or newlines: " + k);
    }
    meta += k + "=" + v + "\n";
  }
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (float v : t.values) w.f32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Container c;
  try {
    ByteReader r(bytes);
    if (r.tag() != "APCK") throw IoError(path.string() + ": bad magic, not a checkpoint");
    if (const auto v = r.u32(); v != kVersion) {
      throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
    }
    const auto kind = r.u32();
    if (kind > 1) throw IoError(path.string() + ": unknown checkpoint kind " + std::to_string(kind));
    c.kind = static_cast<CheckpointKind>(kind);
    std::istringstream meta(r.str(r.u32()));
    for (std::string line; std::getline(meta, line);) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError(path.string() + ": malformed metadata line");
      c.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.str(r.u32());
      Tensor t;
      const auto ndim = r.u32();
      if (ndim > 4) throw IoError(path.string() + ": tensor '" + name + "' has too many dims");
      std::uint64_t count = 1;
      for (std::uint32_t d = 0; d < ndim; ++d) {
        t.shape.push_back(r.u64());
        count *= t.shape.back();
      }
      if (count * 4 > r.remaining()) throw std::out_of_range("tensor data");
      t.values.resize(count);
      for (auto& v : t.values) {
        v = r.f32();
        if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite value in '" + name + "'");
      }
      c.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (r.remaining() != 0) throw IoError(path.string() + ": trailing bytes after tensors");
  } catch (const std::out_of_range&) {
    throw IoError(path.string() + ": truncated checkpoint");
  }
  return c;
}

Tensor to_tensor(const ParamView<float>& v) {
  Tensor t;
  for (auto d : v.shape) t.shape.push_back(static_cast<std::uint64_t>(d));
  t.values.assign(v.data, v.data + v.size);
  return t;
}

void fill(const ParamView<float>& v, const Tensor& t, const std::filesystem::path& path) {
  bool ok = t.shape.size() == v.shape.size();
  for (std::size_t i = 0; ok && i < t.shape.size(); ++i) {
    ok = t.shape[i] == static_cast<std::uint64_t>(v.shape[i]);
  }
  if (!ok) throw IoError(path.string() + ": shape mismatch for '" + v.name + "'");
  std::copy(t.values.begin(), t.values.end(), v.data);
}

int meta_int(const Metadata& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw IoError("checkpoint metadata lacks '" + key + "'");
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw IoError("checkpoint metadata '" + key + "' is not an integer");
  }
}

}  // namespace

Metadata config_metadata(const DiTConfig& c) {
  return {{"d_model", std::to_string(c.d_model)},       {"n_layers", std::to_string(c.n_layers)},
          {"n_heads", std::to_string(c.n_heads)},       {"d_text", std::to_string(c.d_text)},
          {"n_channels", std::to_string(c.n_channels)}, {"max_frames", std::to_string(c.max_frames)},
          {"ff_mult", std::to_string(c.ff_mult)},       {"num_timesteps", std::to_string(c.num_timesteps)}};
}

DiTConfig config_from_metadata(const Metadata& m) {
  DiTConfig c;
  c.d_model = meta_int(m, "d_model");
  c.n_layers = meta_int(m, "n_layers");
  c.n_heads = meta_int(m, "n_heads");
  c.d_text = meta_int(m, "d_text");
  c.n_channels = meta_int(m, "n_channels");
  c.max_frames = meta_int(m, "max_frames");
  c.ff_mult = meta_int(m, "ff_mult");
  c.num_timesteps = meta_int(m, "num_timesteps");
  c.validate();
  return c;
}

void save_base(const DiTModel<float>& model, const std::filesystem::path& path,
               const Metadata& extra) {
  Container c;
  c.kind = CheckpointKind::kBase;
  c.meta = extra;
  for (const auto& [k, v] : config_metadata(model.config)) c.meta[k] = v;
  auto& m = const_cast<DiTModel<float>&>(model);  // views are only read
  for (const auto& v : param_views(m)) {
    if (v.group == ParamGroup::kAdapter) continue;
    c.tensors.emplace_back(v.name, to_tensor(v));
  }
  write_container(c, path);
}

DiTModel<float> load_base(const std::filesystem::path& path, Metadata* metadata) {
  const Container c = read_container(path);
  if (c.kind != CheckpointKind::kBase) throw IoError(path.string() + ": not a base checkpoint");
  DiTModel<float> model;
  try {
    model = DiTModel<float>::init(config_from_metadata(c.meta), 0);
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": invalid model config: " + e.what());
  }
  for (const auto& v : param_views(model)) fill(v, c.get(v.name, path), path);
  if (metadata) *metadata = c.meta;
  return model;
}

void save_adapters(const DiTModel<float>& model, const std::filesystem::path& path,
                   const Metadata& extra) {
  if (!model.has_adapters()) throw std::logic_error("model has no adapters to save");
  Container c;
  c.kind = CheckpointKind::kAdapters;
  c.meta = extra;
  for (const auto& [k, v] : config_metadata(model.config)) c.meta[k] = v;
  auto& m = const_cast<DiTModel<float>&>(model);
  for (const auto& v : param_views(m)) {
    if (v.group != ParamGroup::kBase) c.tensors.emplace_back(v.name, to_tensor(v));
  }
  // Alphas are not views; walk the attention sites directly.
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& b = model.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    const std::pair<const char*, const Linear<float>*> sites[] = {
        {"self_attn.q", &b.self_attn.q},   {"self_attn.v", &b.self_attn.v},
        {"cross_attn.q", &b.cross_attn.q}, {"cross_attn.v", &b.cross_attn.v}};
    for (const auto& [name, lin] : sites) {
      if (!lin->lora) continue;
      if (lin->merged) throw std::logic_error("adapters are merged into the base; nothing separate to save");
      c.tensors.emplace_back(p + name + ".lora_alpha", Tensor{{1}, {lin->lora->alpha}});
    }
  }
  write_container(c, path);
}

void load_adapters(DiTModel<float>& model, const std::filesystem::path& path, Metadata* metadata) {
  const Container c = read_container(path);
  if (c.kind != CheckpointKind::kAdapters) throw IoError(path.string() + ": not an adapter checkpoint");
  DiTConfig cfg;
  try {
    cfg = config_from_metadata(c.meta);
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": invalid model config: " + e.what());
  }
  if (!(cfg == model.config)) throw IoError(path.string() + ": adapters were trained for a different model config");
  detach_adapters(model);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    auto& b = model.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    const std::pair<const char*, Linear<float>*> sites[] = {
        {"self_attn.q", &b.self_attn.q},   {"self_attn.v", &b.self_attn.v},
        {"cross_attn.q", &b.cross_attn.q}, {"cross_attn.v", &b.cross_attn.v}};
    for (const auto& [name, lin] : sites) {
      const Tensor& a = c.get(p + name + ".lora_a", path);
      const Tensor& alpha = c.get(p + name + ".lora_alpha", path);
      if (a.shape.size() != 2 || a.shape[0] < 1 || alpha.values.size() != 1) {
        throw IoError(path.string() + ": malformed adapter at " + p + name);
      }
      const auto rank = static_cast<Eigen::Index>(a.shape[0]);
      LoRAAdapter<float> ad;
      ad.A = Mat<float>::Zero(rank, lin->d_in());
      ad.B = Mat<float>::Zero(lin->d_out(), rank);
      ad.alpha = alpha.values[0];
      lin->lora = std::move(ad);
      lin->merged = false;
    }
  }
  for (const auto& v : param_views(model)) {
    if (v.group != ParamGroup::kBase) fill(v, c.get(v.name, path), path);
  }
  if (metadata) *metadata = c.meta;
}

}  // namespace apalette
