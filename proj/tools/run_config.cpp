// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "apalette/audio_io.hpp"

namespace apalette::cli {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      // training
      {"seed", ""},
      {"steps", "2000"},
      {"lr", "0.001"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"weight_decay", "0.01"},
      {"adam_eps", "1e-8"},
      {"batch_size", "8"},
      {"p_text", "0.15"},
      {"p_dyn", "0.15"},
      {"p_timbre", "0.15"},
      {"per_signal_dropout", "false"},
      {"median_kernels", "1,3,5,7,9,11,13,15,17,19,21,23,25,27,29,31"},
      {"lora_rank", "4"},
      {"lora_alpha", ""},
      {"crop_frames", "0"},
      {"checkpoint_every", "500"},
      {"conditions", "text,loudness,pitch,centroid,timbre"},
      // model
      {"d_model", "64"},
      {"n_layers", "4"},
      {"n_heads", "4"},
      {"max_frames", "1024"},
      {"ff_mult", "4"},
      {"num_timesteps", "1000"},
      // analysis grid and latents
      {"win", "1024"},
      {"hop", "256"},
      {"latent_scale", "32"},
      // sampling
      {"sampler_steps", "50"},
      {"cfg_mode", "nested"},
      {"ancestral", "false"},
      {"clip_x0", "0"},
      {"s_text", "1"},
      {"s_ctrls", "1"},
      {"s_timbre", "1"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError("config '" + key + "': '" + text + "' is not a valid number");
  }
  return v;
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config file");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const UsageError& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

bool RunConfig::is_set(const std::string& key) const { return !get(key).empty(); }

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config '" + key + "': expected true or false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  if (!is_set("seed")) throw UsageError("a seed is required (--seed N or seed=N)");
  return parse_number<std::uint64_t>("seed", get("seed"));
}

std::string RunConfig::resolved() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << resolved();
  if (!out) throw IoError(path.string() + ": write failed");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.seed = seed();
  c.steps = get_int("steps");
  c.lr = get_double("lr");
  c.beta1 = get_double("beta1");
  c.beta2 = get_double("beta2");
  c.weight_decay = get_double("weight_decay");
  c.adam_eps = get_double("adam_eps");
  c.batch_size = get_int("batch_size");
  c.p_text = get_double("p_text");
  c.p_dyn = get_double("p_dyn");
  c.p_timbre = get_double("p_timbre");
  c.per_signal_dropout = get_bool("per_signal_dropout");
  c.median_kernels.clear();
  std::istringstream ks(get("median_kernels"));
  for (std::string k; std::getline(ks, k, ',');) {
    c.median_kernels.push_back(parse_number<int>("median_kernels", trim(k)));
  }
  c.lora_rank = get_int("lora_rank");
  if (is_set("lora_alpha")) c.lora_alpha = get_double("lora_alpha");
  c.crop_frames = get_int("crop_frames");
  c.checkpoint_every = get_int("checkpoint_every");
  c.enabled = parse_conditions(get("conditions"));
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid training config: ") + e.what());
  }
  return c;
}

DiTConfig RunConfig::dit_config() const {
  DiTConfig c;
  c.d_model = get_int("d_model");
  c.n_layers = get_int("n_layers");
  c.n_heads = get_int("n_heads");
  c.max_frames = get_int("max_frames");
  c.ff_mult = get_int("ff_mult");
  c.num_timesteps = get_int("num_timesteps");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid model config: ") + e.what());
  }
  return c;
}

FrameGrid RunConfig::grid() const {
  FrameGrid g;
  g.win_samples = get_int("win");
  g.hop_samples = get_int("hop");
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid analysis grid: ") + e.what());
  }
  return g;
}

GuidanceScales RunConfig::scales() const {
  GuidanceScales s{get_double("s_text"), get_double("s_ctrls"), get_double("s_timbre")};
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return s;
}

SamplerOptions RunConfig::sampler_options() const {
  SamplerOptions o;
  o.steps = get_int("sampler_steps");
  const std::string& mode = get("cfg_mode");
  if (mode == "nested") {
    o.cfg_mode = CfgMode::kNested;
  } else if (mode == "independent") {
    o.cfg_mode = CfgMode::kIndependent;
  } else {
    throw UsageError("cfg_mode must be 'nested' or 'independent'");
  }
  o.ancestral = get_bool("ancestral");
  o.clip_x0 = get_double("clip_x0");
  if (o.clip_x0 < 0.0) throw UsageError("clip_x0 must be >= 0");
  o.enabled = parse_conditions(get("conditions"));
  return o;
}

CondState parse_conditions(const std::string& text) {
  CondState s = CondState::unconditional();
  if (trim(text) == "none") return s;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (item == "text") {
      s.text = true;
    } else if (item == "loudness") {
      s.loudness = true;
    } else if (item == "pitch") {
      s.pitch = true;
    } else if (item == "centroid") {
      s.centroid = true;
    } else if (item == "timbre") {
      s.timbre = true;
    } else if (item == "dyn") {
      s.loudness = s.pitch = s.centroid = true;
    } else {
      throw UsageError("unknown condition '" + item + "' (text, loudness, pitch, centroid, timbre, dyn)");
    }
  }
  return s;
}

std::string format_conditions(const CondState& s) {
  std::string out;
  const auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(s.text, "text");
  add(s.loudness, "loudness");
  add(s.pitch, "pitch");
  add(s.centroid, "centroid");
  add(s.timbre, "timbre");
  return out.empty() ? "none" : out;
}

}  // namespace apalette::cli
