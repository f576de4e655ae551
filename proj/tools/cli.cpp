// Copyright 2026 The Audio Palette Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apalette/checkpoint.hpp"
#include "apalette/eval.hpp"
#include "apalette/pipeline.hpp"
#include "run_config.hpp"

namespace apalette::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kConfigFile = "config.txt";
constexpr const char* kManifestFile = "manifest.tsv";

// Options every model command accepts; flags are folded into the RunConfig
// after the config file, so they win.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> assignments;
  std::string seed;
  std::map<std::string, std::string> key_flags;  // config key -> flag value

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--set", assignments, "Override one config key (key=value); repeatable");
    app->add_option("--seed", seed, "Random seed (required)");
  }

  // --flag maps straight onto a config key.
  void add_key_flag(CLI::App* app, const std::string& flag, const std::string& key,
                    const std::string& help) {
    // std::map nodes stay put, so CLI11 can hold the reference.
    app->add_option(flag, key_flags[key], help);
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_file.empty()) c.load_file(config_file);
    for (const auto& a : assignments) c.set_assignment(a);
    for (const auto& [key, value] : key_flags) {
      if (!value.empty()) c.set(key, value);
    }
    if (!seed.empty()) c.set("seed", seed);
    c.seed();  // mandatory
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

std::string format_loss_log(const std::vector<StepLog>& log) {
  std::string s = "step\tloss\n";
  char buf[64];
  for (const auto& l : log) {
    std::snprintf(buf, sizeof buf, "%d\t%.9g\n", l.step, l.loss);
    s += buf;
  }
  return s;
}

fs::path manifest_in(const fs::path& dir) {
  const fs::path m = fs::is_directory(dir) ? dir / kManifestFile : dir;
  if (!fs::is_regular_file(m)) throw IoError(m.string() + ": dataset manifest not found");
  return m;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory: " + ec.message());
}

StepCallback progress(std::ostream& out, const char* tag, int every,
                      const std::function<void(int, const DiTModel<float>&)>& checkpoint) {
  return [&out, tag, every, checkpoint](const StepLog& l, const DiTModel<float>& model) {
    if (l.step == 1 || l.step % 100 == 0) out << tag << " step " << l.step << " loss " << l.loss << '\n';
    if (every > 0 && l.step % every == 0) checkpoint(l.step, model);
  };
}

std::string step_name(const char* prefix, int step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%06d.apck", prefix, step);
  return buf;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  int n = 0;
  std::string seed;
  std::string out;
  double min_duration = 1.0;
  double max_duration = 4.0;
  std::string encoding = "float32";
};

int cmd_synth_data(const SynthArgs& a, std::ostream& out) {
  if (a.seed.empty()) throw UsageError("--seed is required");
  RunConfig seed_check;  // same seed parsing as the model commands
  seed_check.set("seed", a.seed);
  DatasetOptions o;
  o.min_duration = a.min_duration;
  o.max_duration = a.max_duration;
  o.encoding = parse_wav_encoding(a.encoding);
  const fs::path dir = a.out;
  ensure_dir(dir);
  const auto manifest = build_dataset(a.n, seed_check.seed(), dir, o);
  std::ostringstream cfg;
  cfg << "encoding=" << a.encoding << "\nmax_duration=" << a.max_duration
      << "\nmin_duration=" << a.min_duration << "\nn=" << a.n << "\nseed=" << a.seed << '\n';
  write_text(dir / kConfigFile, cfg.str());
  out << "wrote " << manifest.entries.size() << " clips to " << dir.string() << '\n';
  return kExitOk;
}

struct ExtractArgs {
  std::string in;
  std::string out;
  int hop = 256;
  int win = 1024;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  FrameGrid grid;
  grid.hop_samples = a.hop;
  grid.win_samples = a.win;
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path in = a.in;
  const fs::path dir = a.out;
  std::vector<std::pair<fs::path, fs::path>> jobs;  // wav -> apcs
  if (fs::is_directory(in) || in.extension() == ".tsv") {
    const auto manifest = read_manifest(manifest_in(in));
    for (const auto& e : manifest.entries) {
      jobs.emplace_back(manifest.resolve(e), (dir / e.audio_path).replace_extension(".apcs"));
    }
  } else {
    jobs.emplace_back(in, (dir / in.filename()).replace_extension(".apcs"));
  }
  ensure_dir(dir);
  for (const auto& [wav, apcs] : jobs) {
    const AudioClip clip = read_wav(wav);
    FrameGrid g = grid;
    g.sample_rate = clip.sample_rate;
    ensure_dir(apcs.parent_path());
    write_apcs(extract_controls(clip, g), apcs);
  }
  write_text(dir / kConfigFile, "hop=" + std::to_string(a.hop) + "\ninput=" + a.in +
                                    "\nwin=" + std::to_string(a.win) + '\n');
  out << "extracted " << jobs.size() << " control files to " << dir.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  CommonOptions common;
  std::string data;
  std::string base;
  std::string out;
};

std::vector<TrainExample> examples_for(const std::string& data, const RunConfig& c) {
  return load_examples(read_manifest(manifest_in(data)), c.latent_scale(), c.grid());
}

int cmd_pretrain(const TrainArgs& a, std::ostream& out) {
  const RunConfig c = a.common.resolve();
  const TrainConfig tc = c.train_config();
  const DiTConfig dc = c.dit_config();
  const fs::path dir = a.out;
  ensure_dir(dir / "checkpoints");
  c.write(dir / kConfigFile);
  const auto data = examples_for(a.data, c);
  auto model = DiTModel<float>::init(dc, tc.seed);
  const Metadata meta = {{"seed", c.get("seed")}, {"stage", "pretrain"}};
  const auto log = pretrain_base(model, data, tc,
                                 progress(out, "pretrain", tc.checkpoint_every,
                                          [&](int step, const DiTModel<float>& m) {
                                            save_base(m, dir / "checkpoints" / step_name("base_step_", step), meta);
                                          }));
  save_base(model, dir / "base.apck", meta);
  write_text(dir / "loss.tsv", format_loss_log(log));
  out << "wrote " << (dir / "base.apck").string() << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig c = a.common.resolve();
  const TrainConfig tc = c.train_config();
  const fs::path dir = a.out;
  auto model = load_base(a.base);
  ensure_dir(dir / "checkpoints");
  c.write(dir / kConfigFile);
  const auto data = examples_for(a.data, c);
  const Metadata meta = {{"seed", c.get("seed")}, {"conditions", c.get("conditions")}};
  const auto log = finetune(model, data, tc,
                            progress(out, "train", tc.checkpoint_every,
                                     [&](int step, const DiTModel<float>& m) {
                                       save_adapters(m, dir / "checkpoints" / step_name("step_", step), meta);
                                     }));
  save_adapters(model, dir / "adapters.apck", meta);
  write_text(dir / "loss.tsv", format_loss_log(log));
  out << "wrote " << (dir / "adapters.apck").string() << '\n';
  return kExitOk;
}

struct GenerateArgs {
  CommonOptions common;
  std::string base;
  std::string adapters;
  std::string prompt;
  std::string ref_audio;
  std::string ref_controls;
  std::optional<double> seconds;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const RunConfig c = a.common.resolve();
  const GuidanceScales scales = c.scales();
  const SamplerOptions so = c.sampler_options();
  const FrameGrid grid = c.grid();
  if (!a.ref_audio.empty() && !a.ref_controls.empty()) {
    throw UsageError("--ref-audio and --ref-controls are mutually exclusive");
  }
  const bool has_ref = !a.ref_audio.empty() || !a.ref_controls.empty();
  if (scales.needs_controls() && !has_ref) {
    throw UsageError(
        "--s-ctrls and --s-timbre steer toward reference controls; pass --ref-audio or "
        "--ref-controls, or set both scales to 0 for text-only generation");
  }

  auto model = load_base(a.base);
  if (!a.adapters.empty()) load_adapters(model, a.adapters);

  std::optional<ControlSignals> raw;
  double seconds = 2.0;
  if (!a.ref_audio.empty()) {
    AudioClip ref = read_wav(a.ref_audio);
    FrameGrid g = grid;
    g.sample_rate = ref.sample_rate;
    raw = extract_controls(ref, g);
    seconds = ref.duration();
  } else if (!a.ref_controls.empty()) {
    raw = read_apcs(a.ref_controls);
    seconds = static_cast<double>(raw->frames() - 1) / raw->frame_rate;
  }
  if (a.seconds) seconds = *a.seconds;
  if (!(seconds > 0.0)) throw UsageError("--seconds must be positive");
  const auto n_samples = static_cast<std::size_t>(std::llround(seconds * kDefaultSampleRate));
  const std::size_t frames = latent_frames_for(n_samples);
  if (frames > static_cast<std::size_t>(model.config.max_frames)) {
    throw UsageError("requested length exceeds the model's " +
                     std::to_string(model.config.max_frames) + " latent frames");
  }
  std::optional<Mat<double>> ctrls;
  if (raw) ctrls = prepare_controls(*raw, FrameStackCodec{}.latent_rate(kDefaultSampleRate), frames);

  const TextEmbedding text = embed_text(a.prompt);
  const Mat<float> z = sample(model, text, ctrls, scales, frames, so, c.seed(),
                              NoiseSchedule::linear(model.config.num_timesteps));
  const AudioClip clip = decode(from_model_latents(z, n_samples, kDefaultSampleRate, c.latent_scale()));

  const fs::path wav = a.out;
  if (wav.has_parent_path()) ensure_dir(wav.parent_path());
  write_wav(clip, wav);
  nlohmann::ordered_json side;
  side["seed"] = c.get("seed");
  side["prompt"] = a.prompt;
  side["s_text"] = scales.text;
  side["s_ctrls"] = scales.ctrls;
  side["s_timbre"] = scales.timbre;
  side["sampler_steps"] = so.steps;
  side["cfg_mode"] = c.get("cfg_mode");
  side["reference"] = !a.ref_audio.empty() ? a.ref_audio : a.ref_controls;
  side["base"] = a.base;
  side["adapters"] = a.adapters;
  side["samples"] = n_samples;
  side["config"] = c.values();
  write_text(fs::path(wav).concat(".json"), side.dump(2) + "\n");
  out << "wrote " << wav.string() << '\n';
  return kExitOk;
}

struct EvaluateArgs {
  CommonOptions common;
  std::string base;
  std::vector<std::string> adapters;
  std::string data;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const RunConfig c = a.common.resolve();
  if (a.adapters.size() != kAblationConfigs.size()) {
    throw UsageError("--adapters takes exactly 4 checkpoints, in table order");
  }
  AblationOptions o;
  o.sampler_steps = c.get_int("sampler_steps");
  o.scales = c.scales();
  o.cfg_mode = c.sampler_options().cfg_mode;
  o.seed = c.seed();
  o.latent_scale = c.latent_scale();
  o.grid = c.grid();
  const fs::path dir = a.out;
  ensure_dir(dir);
  c.write(dir / kConfigFile);
  const auto refs = load_eval_clips(read_manifest(manifest_in(a.data)), o.grid);
  const std::vector<fs::path> paths(a.adapters.begin(), a.adapters.end());
  const auto reports = run_ablation(a.base, paths, refs, o);
  write_report_tsv(reports, dir / "report.tsv");
  out << format_report_tsv(reports);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Controllable Foley synthesis: data, training, generation and evaluation"};
  app.name("apalette");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Render a synthetic Foley dataset");
  s->add_option("--n", synth.n, "Number of clips")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Random seed")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--min-duration", synth.min_duration, "Shortest clip (s)");
  s->add_option("--max-duration", synth.max_duration, "Longest clip (s)");
  s->add_option("--encoding", synth.encoding, "float32 or pcm16");

  ExtractArgs extract;
  auto* x = app.add_subcommand("extract", "Write APCS control files for WAV input");
  x->add_option("--in", extract.in, "WAV file or dataset directory")->required()->check(CLI::ExistingPath);
  x->add_option("--out", extract.out, "Output directory")->required();
  x->add_option("--hop", extract.hop, "Hop size (samples)");
  x->add_option("--win", extract.win, "Window size (samples, power of two)");

  TrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Train the base model on text conditioning");
  pre.common.add_to(p);
  pre.common.add_key_flag(p, "--steps", "steps", "Optimizer steps");
  p->add_option("--data", pre.data, "Dataset directory")->required();
  p->add_option("--out", pre.out, "Run directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fine-tune adapters and the control projection");
  train.common.add_to(t);
  train.common.add_key_flag(t, "--steps", "steps", "Optimizer steps");
  train.common.add_key_flag(t, "--conditions", "conditions", "Groups the model may see");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--base", train.base, "Base checkpoint")->required();
  t->add_option("--out", train.out, "Run directory")->required();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Sample audio with text and control guidance");
  gen.common.add_to(g);
  gen.common.add_key_flag(g, "--s-text", "s_text", "Text guidance scale");
  gen.common.add_key_flag(g, "--s-ctrls", "s_ctrls", "Dynamics guidance scale");
  gen.common.add_key_flag(g, "--s-timbre", "s_timbre", "Timbre guidance scale");
  gen.common.add_key_flag(g, "--steps", "sampler_steps", "Sampler steps");
  g->add_option("--base", gen.base, "Base checkpoint")->required();
  g->add_option("--adapters", gen.adapters, "Adapter checkpoint");
  g->add_option("--prompt", gen.prompt, "Caption");
  g->add_option("--ref-audio", gen.ref_audio, "WAV whose controls guide generation");
  g->add_option("--ref-controls", gen.ref_controls, "APCS file of target controls");
  g->add_option("--seconds", gen.seconds, "Output length (defaults to the reference's)");
  g->add_option("--out", gen.out, "Output WAV")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score the four ablation checkpoints");
  ev.common.add_to(e);
  ev.common.add_key_flag(e, "--steps", "sampler_steps", "Sampler steps");
  e->add_option("--base", ev.base, "Base checkpoint")->required();
  e->add_option("--adapters", ev.adapters, "Four adapter checkpoints in table order")->required();
  e->add_option("--data", ev.data, "Held-out dataset directory")->required();
  e->add_option("--out", ev.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth_data(synth, out);
    if (x->parsed()) return cmd_extract(extract, out);
    if (p->parsed()) return cmd_pretrain(pre, out);
    if (t->parsed()) return cmd_train(train, out);
    if (g->parsed()) return cmd_generate(gen, out);
    if (e->parsed()) return cmd_evaluate(ev, out);
  } catch (const UsageError& ue) {
    err << "error: " << ue.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace apalette::cli
