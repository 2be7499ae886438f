// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "decoar/features/cmvn.hpp"
#include "decoar/features/synthetic.hpp"
#include "decoar/pipeline/ablation.hpp"

using namespace decoar;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c = TrainConfig::desk();
  c.encoder = EncoderConfig{12, 16, 1, 2, 32, 4, 2, 0.1};
  c.mask.span_length = 5;
  c.codebook.entries_per_codebook = 8;
  c.batch_size = 3;
  c.max_utterance_seconds = 0.5;
  c.total_steps = 100;
  c.warmup_steps = 10;
  c.resolve();
  return c;
}

std::vector<FeatureSequence> tiny_corpus(std::uint64_t seed = 7) {
  SyntheticCorpusConfig s;
  s.seed = seed;
  s.num_units = 4;
  s.num_speakers = 2;
  s.utterances_per_speaker = 10;
  s.min_frames = 40;
  s.max_frames = 90;
  s.feature_dim = 12;
  return cmvn_per_speaker(generate_synthetic_corpus(s).utterances);
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("decoar_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Trainer make_trainer(const TrainConfig& cfg, const std::vector<FeatureSequence>& corpus) {
  auto split = split_corpus(corpus, cfg.heldout_fraction);
  return Trainer(cfg, split.train, split.heldout);
}

}  // namespace

TEST_CASE("presets carry their documented values") {
  const auto d = TrainConfig::desk();
  REQUIRE(d.preset == "desk");
  REQUIRE(d.encoder.model_dim == 64);
  REQUIRE(d.codebook.output_dim == 64);
  REQUIRE(d.mask.span_length == 20);
  const auto p = TrainConfig::paper();
  REQUIRE(p.encoder.model_dim == 768);
  REQUIRE(p.encoder.num_blocks == 12);
  REQUIRE(p.encoder.num_heads == 8);
  REQUIRE(p.encoder.ffn_inner_dim == 3072);
  REQUIRE(p.codebook.num_codebooks == 2);
  REQUIRE(p.codebook.entries_per_codebook == 320);
  REQUIRE(p.batch_size == 128);
  REQUIRE(p.max_utterance_seconds == 15.0);
  REQUIRE(p.max_frames() == 1500);
  REQUIRE(p.loss.alpha == 0.1);
  REQUIRE(p.temperature.start == 2.0);
  REQUIRE(p.temperature.floor == 0.5);
  REQUIRE(p.temperature.decay_factor == 0.999995);
  REQUIRE(p.mask.span_length == 20);
  REQUIRE(p.mask.target_mask_fraction == 0.4);
}

TEST_CASE("config JSON round trip and strictness") {
  const auto c = tiny_config();
  REQUIRE(parse_config(config_string(c)) == c);
  REQUIRE(config_hash(parse_config(config_string(c))) == config_hash(c));

  const auto o = parse_config(R"({"preset": "paper", "batch_size": 8, "loss": {"alpha": 0.5}})");
  REQUIRE(o.encoder.model_dim == 768);
  REQUIRE(o.batch_size == 8);
  REQUIRE(o.loss.alpha == 0.5);
  REQUIRE(parse_config("{}") == TrainConfig::desk());

  REQUIRE_THROWS_AS(parse_config(R"({"batchsize": 8})"), UsageError);
  REQUIRE_THROWS_AS(parse_config(R"({"encoder": {"model_dims": 8}})"), UsageError);
  REQUIRE_THROWS_AS(parse_config(R"({"preset": "huge"})"), UsageError);
  REQUIRE_THROWS_AS(parse_config(R"({"batch_size": "four"})"), UsageError);
  REQUIRE_THROWS_AS(parse_config(R"({"batch_size": 0})"), UsageError);
  REQUIRE_THROWS_AS(parse_config(R"({"encoder": {"num_heads": 5}})"), UsageError);
  REQUIRE_THROWS_AS(parse_config("[1, 2]"), UsageError);
  REQUIRE_THROWS_AS(parse_config("{"), UsageError);
  REQUIRE_THROWS_AS(load_config("/nonexistent/config.json"), UsageError);
}

TEST_CASE("corpus split is deterministic, disjoint and seed independent") {
  const auto corpus = tiny_corpus();
  const auto a = split_corpus(corpus, 0.1), b = split_corpus(corpus, 0.1);
  REQUIRE(a.heldout.size() == 2);
  REQUIRE(a.train.size() == 18);
  REQUIRE(a.heldout == b.heldout);
  std::set<std::string> ids;
  for (const auto& s : a.train) ids.insert(s.utterance_id);
  for (const auto& s : a.heldout) REQUIRE(ids.insert(s.utterance_id).second);
  REQUIRE_THROWS_AS(split_corpus({corpus[0]}, 0.1), DataError);
}

TEST_CASE("length-grouped batching covers each utterance once per epoch") {
  const auto corpus = tiny_corpus();
  LengthGroupedBatcher batcher(corpus, 3, 5);
  REQUIRE(batcher.num_groups() == 7);
  const auto n = static_cast<std::int64_t>(batcher.num_groups());
  for (std::int64_t epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(corpus.size(), 0);
    for (std::int64_t s = epoch * n; s < (epoch + 1) * n; ++s) {
      const auto& g = batcher.group_for_step(s);
      for (auto i : g) ++seen[i];
    }
    for (int c : seen) REQUIRE(c == 1);
  }
  // Groups are contiguous in length order.
  std::vector<std::size_t> lengths;
  for (std::int64_t s = 0; s < n; ++s) {
    const auto& g = batcher.group_for_step(s);
    std::size_t lo = SIZE_MAX, hi = 0;
    for (auto i : g) {
      lo = std::min(lo, corpus[i].num_frames);
      hi = std::max(hi, corpus[i].num_frames);
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (std::find(g.begin(), g.end(), i) == g.end()) REQUIRE((corpus[i].num_frames <= lo || corpus[i].num_frames >= hi));
    }
  }

  const auto cfg = tiny_config();
  const auto& g = batcher.group_for_step(0);
  const auto b = make_batch(corpus, g, cfg.max_frames(), cfg.mask, RngStream(1, "m"));
  std::size_t shortest = cfg.max_frames();
  for (auto i : g) shortest = std::min(shortest, corpus[i].num_frames);
  REQUIRE(b.seq_len == shortest);
  REQUIRE(b.frames.size() == b.batch * b.seq_len * b.dim);
  REQUIRE(std::is_sorted(b.masked_rows.begin(), b.masked_rows.end()));
  REQUIRE(b.masked_rows.back() < b.batch * b.seq_len);
  for (std::size_t k = 0; k < g.size(); ++k) {
    REQUIRE(std::equal(b.frames.begin() + k * b.seq_len * b.dim, b.frames.begin() + (k + 1) * b.seq_len * b.dim,
                       corpus[g[k]].frames.begin()));
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  auto cfg = tiny_config();
  cfg.peak_lr = 0.0;
  auto t = make_trainer(cfg, tiny_corpus());
  const auto before = t.model().params().checksum();
  t.run_until(10);
  REQUIRE(t.model().params().checksum() == before);
  for (const auto& r : t.trace()) REQUIRE(r.lr == 0.0);
}

TEST_CASE("training is deterministic and logs the schedules exactly") {
  const auto cfg = tiny_config();
  const auto corpus = tiny_corpus();
  auto a = make_trainer(cfg, corpus), b = make_trainer(cfg, corpus);
  a.run_until(100);
  b.run_until(100);
  REQUIRE(a.trace() == b.trace());
  REQUIRE(a.model().params().checksum() == b.model().params().checksum());
  for (const auto& r : a.trace()) {
    REQUIRE(r.lr == lr_at(cfg.lr_schedule(), r.step));
    REQUIRE(r.temperature == temperature_at(cfg.temperature, r.step));
    REQUIRE(std::isfinite(r.total));
    REQUIRE(r.total == Catch::Approx(r.recon + cfg.loss.alpha * r.diversity).epsilon(1e-12));
    REQUIRE(r.perplexity.size() == 2);
  }
  REQUIRE(a.trace().back().recon < a.trace().front().recon);

  auto other = cfg;
  other.rng_seed = 2;
  auto c = make_trainer(other, corpus);
  c.run_until(5);
  REQUIRE(c.trace()[0].total != a.trace()[0].total);
}

TEST_CASE("training without the quantizer reports no diversity or perplexity") {
  auto cfg = tiny_config();
  cfg.use_vq = false;
  auto t = make_trainer(cfg, tiny_corpus());
  const auto r = t.train_step();
  REQUIRE(std::isnan(r.diversity));
  REQUIRE(r.perplexity.empty());
  REQUIRE(r.total == r.recon);
  REQUIRE(t.model().quantizer() == nullptr);
  REQUIRE(trace_csv_row(r).find(",,") != std::string::npos);
}

TEST_CASE("non-finite loss aborts with the step") {
  auto corpus = tiny_corpus();
  for (auto& s : corpus)
    for (auto& v : s.frames) v = 3e38f;
  auto t = make_trainer(tiny_config(), corpus);
  try {
    t.train_step();
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    INFO(e.what());
    REQUIRE(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("trainer rejects incompatible data") {
  auto cfg = tiny_config();
  auto corpus = tiny_corpus();
  cfg.encoder.input_dim = 10;
  REQUIRE_THROWS_AS(make_trainer(cfg, corpus), UsageError);
  cfg = tiny_config();
  cfg.mask.span_length = 45;
  REQUIRE_THROWS_AS(make_trainer(cfg, corpus), DataError);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted trace") {
  const auto cfg = tiny_config();
  const auto corpus = tiny_corpus();
  auto full = make_trainer(cfg, corpus);
  full.run_until(100);

  auto first = make_trainer(cfg, corpus);
  first.run_until(50);
  const auto bytes = encode_checkpoint(snapshot(first));
  const auto ckpt = decode_checkpoint(bytes);
  REQUIRE(ckpt.step == 50);
  auto second = make_trainer(ckpt.config, corpus);
  restore(second, ckpt);
  second.run_until(100);
  REQUIRE(second.trace().size() == 50);
  for (std::size_t i = 0; i < 50; ++i) REQUIRE(second.trace()[i] == full.trace()[50 + i]);
  REQUIRE(second.model().params().checksum() == full.model().params().checksum());

  auto other = cfg;
  other.peak_lr = 1e-3;
  auto mismatched = make_trainer(other, corpus);
  REQUIRE_THROWS_AS(restore(mismatched, ckpt), DataError);
}

TEST_CASE("pretrain driver writes interval checkpoints and resumes") {
  auto cfg = tiny_config();
  cfg.total_steps = 30;
  cfg.checkpoint_interval = 10;
  const auto corpus = tiny_corpus();
  const auto dir = scratch_dir("pretrain");
  PretrainOptions opt;
  opt.checkpoint_path = dir / "model.ckpt";
  std::int64_t calls = 0;
  opt.on_step = [&](const TraceRow&) { ++calls; };
  const auto full = pretrain(cfg, corpus, opt);
  REQUIRE(calls == 30);
  REQUIRE(full.trace.size() == 30);
  REQUIRE(fs::exists(dir / "model.ckpt.step10"));
  REQUIRE(fs::exists(dir / "model.ckpt.step20"));
  REQUIRE_FALSE(fs::exists(dir / "model.ckpt.step30"));
  REQUIRE(std::isfinite(full.initial_heldout_recon));
  REQUIRE(std::isfinite(full.final_heldout_recon));

  const auto mid = load_checkpoint(dir / "model.ckpt.step20");
  PretrainOptions ropt;
  ropt.resume = &mid;
  const auto resumed = pretrain(cfg, corpus, ropt);
  REQUIRE(resumed.trace.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) REQUIRE(resumed.trace[i] == full.trace[20 + i]);
  REQUIRE(encode_checkpoint(resumed.checkpoint) == encode_checkpoint(load_checkpoint(dir / "model.ckpt")));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  auto t = make_trainer(tiny_config(), tiny_corpus());
  t.run_until(5);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(snapshot(t), dir / "a.ckpt");
  const auto c = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(c, dir / "b.ckpt");
  REQUIRE(detail::read_file(dir / "a.ckpt") == detail::read_file(dir / "b.ckpt"));
  REQUIRE(c.step == 5);
  REQUIRE(c.optimizer.step == 5);
  REQUIRE(c.blobs == parameter_blobs(t.model().params()));
  fs::remove_all(dir);
}

TEST_CASE("corrupted checkpoints raise typed errors") {
  auto t = make_trainer(tiny_config(), tiny_corpus());
  t.run_until(2);
  const auto good = encode_checkpoint(snapshot(t));

  // Every single-byte flip in the body is caught.
  for (std::size_t at = 8; at < good.size(); at += 97) {
    auto bad = good;
    bad[at] = static_cast<char>(bad[at] ^ 0x10);
    REQUIRE_THROWS_AS(decode_checkpoint(bad), ChecksumError);
  }
  auto bad = good;
  bad[0] = 'X';
  REQUIRE_THROWS_AS(decode_checkpoint(bad), BadMagicError);
  bad = good;
  bad[4] = 9;
  REQUIRE_THROWS_AS(decode_checkpoint(bad), VersionMismatchError);
  REQUIRE_THROWS_AS(decode_checkpoint(good.substr(0, 12)), TruncatedError);
  REQUIRE_THROWS_AS(decode_checkpoint(good.substr(0, good.size() - 1)), ChecksumError);
  REQUIRE_THROWS_AS(decode_checkpoint(""), BadMagicError);
  REQUIRE_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), DataError);

  auto c = decode_checkpoint(good);
  c.blobs.erase(c.blobs.begin() + 3);
  const auto missing = decode_checkpoint(encode_checkpoint(c));
  REQUIRE_THROWS_AS(model_from_checkpoint(missing), MissingBlobError);

  c = decode_checkpoint(good);
  c.blobs[0].shape.push_back(1);
  REQUIRE_THROWS_AS(model_from_checkpoint(decode_checkpoint(encode_checkpoint(c))), DataError);

  c = decode_checkpoint(good);
  c.blobs.push_back({"stray", {1}, {0.f}});
  REQUIRE_THROWS_AS(model_from_checkpoint(decode_checkpoint(encode_checkpoint(c))), DataError);
}

TEST_CASE("extraction is deterministic, frozen and bypasses the quantizer") {
  const auto corpus = tiny_corpus();
  auto t = make_trainer(tiny_config(), corpus);
  t.run_until(30);
  const auto model = model_from_checkpoint(snapshot(t));
  REQUIRE(model->params().checksum() == t.model().params().checksum());
  const auto before = model->params().checksum();

  const auto a = extract_features(*model, corpus);
  const auto b = extract_features(*model, corpus);
  REQUIRE(a.latents == b.latents);
  REQUIRE(a.codes == b.codes);
  REQUIRE(a.groups == 2);
  REQUIRE(a.entries == 8);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    REQUIRE(a.latents[i].dim == 16);
    REQUIRE(a.latents[i].num_frames == corpus[i].num_frames);
    REQUIRE(a.latents[i].labels == corpus[i].labels);
    REQUIRE(a.codes[i].size() == 2 * corpus[i].num_frames);
  }

  // The quantized forward of the same frames is a different representation.
  const auto z = model->extract(corpus[0].frames, corpus[0].num_frames);
  const auto quantized = model->quantizer()->inference(z).quantized;
  const auto zq = quantized.vec();
  REQUIRE(zq.size() == a.latents[0].frames.size());
  double diff = 0;
  for (std::size_t i = 0; i < zq.size(); ++i) diff = std::max(diff, double(std::abs(zq[i] - a.latents[0].frames[i])));
  REQUIRE(diff > 1e-3);

  const auto report = probe_report(a.latents, 4, nullptr);
  REQUIRE(report.accuracy >= 0.0);
  REQUIRE(model->params().checksum() == before);

  auto wrong = corpus[0];
  wrong.dim = 6;
  wrong.frames.resize(wrong.num_frames * 6);
  REQUIRE_THROWS_AS(extract_features(*model, std::vector<FeatureSequence>{wrong}), UsageError);
}

TEST_CASE("probe reaches 1.0 on one-hot features and chance on shuffled labels") {
  const std::size_t k = 8;
  RngStream rng(3, "probe");
  auto make = [&](std::size_t n) {
    FrameSet s;
    s.dim = k;
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = static_cast<std::uint32_t>(rng.below(k));
      for (std::size_t c = 0; c < k; ++c) s.x.push_back(c == y ? 1.f : 0.f);
      s.y.push_back(y);
    }
    return s;
  };
  const auto train = make(4000), held = make(4000);
  const auto r = train_probe(train, held, k);
  REQUIRE(r.accuracy == 1.0);
  std::uint64_t total = 0;
  for (std::size_t t = 0; t < k; ++t) total += std::accumulate(r.confusion[t].begin(), r.confusion[t].end(), 0ull);
  REQUIRE(total == held.size());

  auto shuffle = [&](FrameSet s) {
    for (std::size_t i = s.y.size(); i > 1; --i) std::swap(s.y[i - 1], s.y[rng.below(i)]);
    return s;
  };
  const auto c = train_probe(shuffle(train), shuffle(held), k);
  REQUIRE(std::abs(c.accuracy - 1.0 / k) <= 0.05);

  auto bad = held;
  bad.y[0] = 8;
  REQUIRE_THROWS_AS(train_probe(train, bad, k), DataError);
  REQUIRE_THROWS_AS(train_probe(train, held, 1), UsageError);
}

TEST_CASE("probe report rows sum to per-unit frame counts") {
  const auto corpus = tiny_corpus();
  const auto r = probe_report(corpus, count_classes(corpus));
  REQUIRE(r.num_classes == 4);
  REQUIRE(r.features == "frozen");
  REQUIRE(r.accuracy >= 0.0);
  REQUIRE(r.accuracy <= 1.0);
  for (std::size_t u = 0; u < r.num_classes; ++u) {
    REQUIRE(std::accumulate(r.confusion[u].begin(), r.confusion[u].end(), 0ull) == r.unit_frames[u]);
  }
  REQUIRE(r.perplexities.empty());
  REQUIRE(std::isnan(r.purity));
  const auto csv = probe_report_csv(r);
  REQUIRE(csv.rfind("kind,row,col,value\n", 0) == 0);
  REQUIRE(probe_report_text(r).find("held-out frame accuracy") != std::string::npos);
}

TEST_CASE("code usage perplexity and purity examples") {
  REQUIRE(code_usage_perplexity({{0, 1, 2, 3}}, 1, 4)[0] == Catch::Approx(4.0));
  REQUIRE(code_usage_perplexity({{2, 2}, {2}}, 1, 4)[0] == Catch::Approx(1.0));
  const auto two = code_usage_perplexity({{0, 3, 1, 3}}, 2, 4);
  REQUIRE(two[0] == Catch::Approx(2.0));
  REQUIRE(two[1] == Catch::Approx(1.0));
  REQUIRE_THROWS_AS(code_usage_perplexity({{0, 9}}, 2, 4), DataError);
  REQUIRE(joint_codes({1, 2, 3, 0}, 2, 4) == std::vector<std::uint64_t>{6, 12});
  REQUIRE(cluster_purity({0, 0, 1, 1}, {0, 1, 1, 1}) == 0.75);
  REQUIRE(cluster_purity({0, 1, 2, 3}, {0, 1, 1, 1}) == 1.0);
}

TEST_CASE("code table file round trip") {
  const auto corpus = tiny_corpus();
  const auto model = Model<float>(tiny_config(), 3);
  const auto e = extract_features(model, corpus);
  const auto dir = scratch_dir("codes");
  write_codes(e, dir / kCodesName);
  const auto t = read_codes(dir / kCodesName);
  REQUIRE(t.groups == e.groups);
  REQUIRE(t.entries == e.entries);
  REQUIRE(t.codes == code_table(e).codes);
  detail::write_file(dir / "bad.tsv", "2\t8\nutt\t1 2 99\n");
  REQUIRE_THROWS_AS(read_codes(dir / "bad.tsv"), DataError);
  detail::write_file(dir / "bad.tsv", "2\t8\nutt\t1 2 3\n");
  REQUIRE_THROWS_AS(read_codes(dir / "bad.tsv"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("ablation report structure") {
  auto cfg = tiny_config();
  cfg.total_steps = 12;
  cfg.warmup_steps = 2;
  AblationOptions opt;
  opt.probe.max_steps = 50;
  const auto r = run_ablation(cfg, tiny_corpus(), {1, 2}, opt);
  REQUIRE(r.rows.size() == 4);
  REQUIRE(r.condition(true).size() == 2);
  REQUIRE(r.condition(false).size() == 2);
  for (const auto& row : r.rows) {
    REQUIRE(row.probe_accuracy >= 0.0);
    REQUIRE(std::isfinite(row.initial_recon));
    if (row.use_vq) {
      REQUIRE(row.perplexities.size() == 2);
      REQUIRE(std::isfinite(row.final_diversity));
      REQUIRE(row.purity > 0.0);
    } else {
      REQUIRE(row.perplexities.empty());
      REQUIRE(std::isnan(row.final_diversity));
      REQUIRE(std::isnan(row.purity));
    }
  }
  REQUIRE(r.controls.size() == 2);
  REQUIRE(r.controls[0].with_diversity == r.rows[0].perplexities);

  const auto csv = ablation_csv(r);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 + 4);
  const auto text = ablation_text(r);
  REQUIRE(text.find("5.43/13.27") != std::string::npos);
  REQUIRE(text.find("6.29/18.54") != std::string::npos);
  REQUIRE(text.find("NOT reproduced") != std::string::npos);
  const auto controls = ablation_controls_csv(r);
  REQUIRE(std::count(controls.begin(), controls.end(), '\n') == 3);
  REQUIRE_THROWS_AS(run_ablation(cfg, tiny_corpus(), {}), UsageError);
}
