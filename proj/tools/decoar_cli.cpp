// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// decoar command-line tool. Exit codes: 0 success, 1 usage error, 2 data
// error, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "decoar/features/cmvn.hpp"
#include "decoar/features/logmel.hpp"
#include "decoar/features/synthetic.hpp"
#include "decoar/pipeline/ablation.hpp"
#include "decoar/pipeline/gradcheck_suite.hpp"

using namespace decoar;
namespace fs = std::filesystem;

namespace {

SyntheticCorpusConfig synthetic_config(const fs::path& path) {
  SyntheticCorpusConfig c;
  if (path.empty()) return c;
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path.string() + ": invalid JSON: " + e.what());
  }
  {
    detail::StrictObject o(j, path.string());
    o.get("seed", c.seed);
    o.get("num_units", c.num_units);
    o.get("num_speakers", c.num_speakers);
    o.get("utterances_per_speaker", c.utterances_per_speaker);
    o.get("min_frames", c.min_frames);
    o.get("max_frames", c.max_frames);
    o.get("min_segment", c.min_segment);
    o.get("max_segment", c.max_segment);
    o.get("noise_std", c.noise_std);
    o.get("feature_dim", c.feature_dim);
    o.get("template_scale", c.template_scale);
    o.get("drift_std", c.drift_std);
    o.get("drift_min_period", c.drift_min_period);
    o.get("drift_max_period", c.drift_max_period);
    o.get("speaker_gain_std", c.speaker_gain_std);
    o.get("speaker_offset_std", c.speaker_offset_std);
    o.get("channel_std", c.channel_std);
    o.get("num_channels", c.num_channels);
  }
  c.validate();
  return c;
}

/// "a.csv" -> "a.txt"; a report that already ends in .txt gets ".summary.txt".
fs::path summary_path(const fs::path& report) {
  auto p = report;
  if (p.extension() == ".txt") return p.string() + ".summary.txt";
  return p.replace_extension(".txt");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file(path, text);
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("--seeds: expected a comma-separated list of non-negative integers");
    }
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw UsageError("--seeds: at least one seed required");
  return seeds;
}

int synth_data(std::uint64_t seed, const fs::path& out, const fs::path& config, bool raw) {
  auto cfg = synthetic_config(config);
  cfg.seed = seed;
  auto corpus = generate_synthetic_corpus(cfg);
  const auto utts = raw ? corpus.utterances : cmvn_per_speaker(corpus.utterances);
  write_feature_dir(utts, out);
  std::printf("wrote %zu utterances (%zu units, dim %zu%s) to %s\n", utts.size(), cfg.num_units, cfg.feature_dim,
              raw ? "" : ", per-speaker CMVN", out.string().c_str());
  return 0;
}

int make_features(const fs::path& wav_dir, const fs::path& out) {
  if (!fs::is_directory(wav_dir)) throw UsageError(wav_dir.string() + " is not a directory");
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(wav_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw DataError("no .wav files in " + wav_dir.string());
  std::vector<FeatureSequence> seqs;
  for (const auto& w : wavs) seqs.push_back(logmel(load_wav(w)));
  write_feature_dir(cmvn_per_speaker(std::move(seqs)), out);
  std::printf("wrote %zu utterances to %s\n", wavs.size(), out.string().c_str());
  return 0;
}

int run_pretrain(const fs::path& config, const fs::path& data, const fs::path& out, bool no_vq, const fs::path& resume,
                 fs::path trace_path, bool quiet) {
  auto cfg = load_config(config);
  if (no_vq) cfg.use_vq = false;
  const auto corpus = read_feature_dir(data);
  Checkpoint from;
  PretrainOptions opt;
  opt.checkpoint_path = out;
  if (!resume.empty()) {
    from = load_checkpoint(resume);
    if (!(from.config == cfg)) throw UsageError("--resume: checkpoint was written with a different config");
    opt.resume = &from;
  }
  if (trace_path.empty()) trace_path = out.string() + ".trace.csv";
  const std::size_t groups = cfg.use_vq ? cfg.codebook.num_codebooks : 0;
  std::string trace = resume.empty() ? trace_csv_header(groups) : "";
  opt.on_step = [&](const TraceRow& r) {
    trace += trace_csv_row(r);
    if (!quiet && (r.step + 1) % 100 == 0) {
      std::printf("step %lld  loss %.4f  recon %.4f  tau %.3f  lr %.2e\n", static_cast<long long>(r.step + 1), r.total,
                  r.recon, r.temperature, r.lr);
      std::fflush(stdout);
    }
  };
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto res = pretrain(cfg, corpus, opt);
  if (resume.empty()) {
    write_text(trace_path, trace);
  } else {
    std::ofstream app(trace_path, std::ios::app | std::ios::binary);
    app << trace;
  }
  if (!resume.empty()) {
    std::printf("resumed at step %lld; ", static_cast<long long>(from.step));
  } else {
    std::printf("held-out masked L1: %.4f -> %.4f (ratio %.3f); ", res.initial_heldout_recon, res.final_heldout_recon,
                res.final_heldout_recon / res.initial_heldout_recon);
  }
  std::printf("checkpoint %s, trace %s\n", out.string().c_str(), trace_path.string().c_str());
  return 0;
}

int run_extract(const fs::path& ckpt, const fs::path& in, const fs::path& out) {
  const auto c = load_checkpoint(ckpt);
  const auto model = model_from_checkpoint(c);
  const auto e = extract_features(*model, read_feature_dir(in));
  write_feature_dir(e.latents, out);
  if (e.groups > 0) write_codes(e, out / kCodesName);
  nlohmann::json meta = {{"checkpoint", ckpt.string()},
                         {"step", c.step},
                         {"rng_seed", c.config.rng_seed},
                         {"config_hash", detail::hex64(config_hash(c.config))}};
  write_text(out / "extract.json", meta.dump(2) + "\n");
  std::printf("extracted %zu utterances (dim %zu) to %s\n", e.latents.size(),
              e.latents.empty() ? std::size_t{0} : e.latents.front().dim, out.string().c_str());
  return 0;
}

int run_probe(const fs::path& features_dir, const fs::path& labels_dir, const fs::path& report_path, bool raw) {
  auto features = read_feature_dir(features_dir);
  std::map<std::string, const FeatureSequence*> by_id;
  const auto labelled = read_feature_dir(labels_dir);
  for (const auto& s : labelled) by_id[s.utterance_id] = &s;
  for (auto& f : features) {
    const auto it = by_id.find(f.utterance_id);
    if (it == by_id.end() || !it->second->labels) throw DataError("no labels for utterance " + f.utterance_id);
    if (it->second->num_frames != f.num_frames) {
      throw DataError("label/feature frame count mismatch for " + f.utterance_id);
    }
    f.labels = it->second->labels;
  }
  CodeTable codes;
  const bool have_codes = !raw && fs::exists(features_dir / kCodesName);
  if (have_codes) codes = read_codes(features_dir / kCodesName);
  auto report = probe_report(features, count_classes(labelled), have_codes ? &codes : nullptr);
  report.features = raw ? "raw" : "frozen";
  if (!raw && fs::exists(features_dir / "extract.json")) {
    const auto meta = nlohmann::json::parse(detail::read_file(features_dir / "extract.json"));
    report.seeds.push_back(meta.at("rng_seed").get<std::uint64_t>());
    report.config_hashes.push_back(std::stoull(meta.at("config_hash").get<std::string>(), nullptr, 16));
  }
  write_text(report_path, probe_report_csv(report));
  const auto text = probe_report_text(report);
  write_text(summary_path(report_path), text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int run_ablate(const fs::path& config, const fs::path& data, const std::string& seeds, const fs::path& report_path,
               bool no_control) {
  const auto cfg = load_config(config);
  const auto corpus = read_feature_dir(data);
  AblationOptions opt;
  opt.alpha_zero_control = !no_control;
  opt.log = [](const std::string& m) {
    std::printf("[ablate] %s\n", m.c_str());
    std::fflush(stdout);
  };
  const auto rep = run_ablation(cfg, corpus, parse_seeds(seeds), opt);
  write_text(report_path, ablation_csv(rep));
  if (!rep.controls.empty()) {
    auto controls = report_path;
    controls.replace_extension(".controls.csv");
    write_text(controls, ablation_controls_csv(rep));
  }
  const auto text = ablation_text(rep);
  write_text(summary_path(report_path), text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int grad_check(const std::string& op) {
  std::vector<std::string> ops = op.empty() ? gradcheck_ops() : std::vector<std::string>{op};
  bool ok = true;
  for (const auto& name : ops) {
    const auto c = decoar::run_gradcheck(name);
    const bool pass = c.max_rel_error < 1e-5;
    ok = ok && pass;
    std::printf("%-16s %zu instances  max rel error %.3e  %.2fs  %s\n", name.c_str(), c.instances, c.max_rel_error,
                c.seconds, pass ? "ok" : "FAILED");
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decoar: masked-reconstruction speech representation toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  fs::path out, config, data, ckpt, in, features, labels, report, resume, trace, wav_dir;
  bool no_vq = false, raw = false, quiet = false, no_control = false;
  std::string seeds, op;

  auto* synth = app.add_subcommand("synth-data", "generate the labelled synthetic corpus");
  synth->add_option("--seed", seed, "corpus seed")->required();
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--config", config, "corpus config JSON");
  synth->add_flag("--raw", raw, "skip per-speaker CMVN");

  auto* mk = app.add_subcommand("make-features", "log-mel features with per-speaker CMVN from a directory of WAV files");
  mk->add_option("--wav-dir", wav_dir, "directory of .wav files (<speaker>-<utterance>.wav)")->required();
  mk->add_option("--out", out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "pre-train an encoder");
  pre->add_option("--config", config, "training config JSON")->required();
  pre->add_option("--data", data, "feature directory")->required();
  pre->add_option("--out", out, "checkpoint path")->required();
  pre->add_flag("--no-vq", no_vq, "train without the quantizer");
  pre->add_option("--resume", resume, "continue from this checkpoint");
  pre->add_option("--trace", trace, "loss trace CSV (default <out>.trace.csv)");
  pre->add_flag("--quiet", quiet, "no progress lines");

  auto* ext = app.add_subcommand("extract", "frozen-encoder features");
  ext->add_option("--ckpt", ckpt, "checkpoint")->required();
  ext->add_option("--in", in, "input feature directory")->required();
  ext->add_option("--out", out, "output directory")->required();

  auto* probe = app.add_subcommand("probe", "framewise linear probe");
  probe->add_option("--features", features, "feature directory")->required();
  probe->add_option("--labels", labels, "directory with labelled feature files")->required();
  probe->add_option("--report", report, "report CSV")->required();
  probe->add_flag("--raw", raw, "the features are raw filterbanks");

  auto* abl = app.add_subcommand("ablate", "with/without quantizer comparison");
  abl->add_option("--config", config, "training config JSON")->required();
  abl->add_option("--data", data, "feature directory")->required();
  abl->add_option("--seeds", seeds, "comma-separated seeds")->required();
  abl->add_option("--report", report, "report CSV")->required();
  abl->add_flag("--no-control", no_control, "skip the alpha = 0 control runs");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient checks");
  gc->add_option("--op", op, "one of: projection, conv-positional, attention-block, ffn, soft-quantizer, head, l1, "
                             "diversity, encoder");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) return synth_data(seed, out, config, raw);
    if (*mk) return make_features(wav_dir, out);
    if (*pre) return run_pretrain(config, data, out, no_vq, resume, trace, quiet);
    if (*ext) return run_extract(ckpt, in, out);
    if (*probe) return run_probe(features, labels, report, raw);
    if (*abl) return run_ablate(config, data, seeds, report, no_control);
    if (*gc) return grad_check(op);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  }
  return 1;
}
