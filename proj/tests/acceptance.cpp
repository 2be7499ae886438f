// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion. Reports from the
// training experiments are written to ./acceptance_reports.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "decoar/features/cmvn.hpp"
#include "decoar/features/synthetic.hpp"
#include "decoar/pipeline/ablation.hpp"
#include "decoar/pipeline/gradcheck_suite.hpp"

using namespace decoar;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d (%s): %s  [%s; %.1fs]\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<FeatureSequence> desk_corpus() { return cmvn_per_speaker(generate_synthetic_corpus({}).utterances); }

fs::path reports_dir() {
  const auto p = fs::current_path() / "acceptance_reports";
  fs::create_directories(p);
  return p;
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_op;
  bool enough = true;
  for (const auto& op : gradcheck_ops()) {
    const auto c = run_gradcheck(op, 5);
    enough = enough && c.instances >= 5;
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_op = op;
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-5 && elapsed < 120 && enough,
          fmt("%zu ops x 5 instances, worst %.2e (%s), %.1fs", gradcheck_ops().size(), worst, worst_op.c_str(), elapsed)};
}

Outcome gumbel_laws() {
  RngStream rng(2024, "acceptance.gumbel");
  const std::size_t rows = 200, g = 2, v = 320;
  std::vector<double> logits(rows * g * v), shifted(rows * g * v);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      const double shift = 10.0 * rng.normal();
      for (std::size_t j = 0; j < v; ++j) {
        const auto i = (r * g + c) * v + j;
        logits[i] = 3.0 * rng.normal();
        shifted[i] = logits[i] + shift;
      }
    }
  const auto noise = gumbel_noise_block<double>(rng.fork(1), rows * g * v);
  const Tensor<double> l({rows, g * v}, logits), ls({rows, g * v}, shifted);

  double sum_err = 0, shift_err = 0;
  for (double tau : {0.5, 1.0, 2.0}) {
    const auto p = gumbel_softmax(l, noise, g, tau).vec();
    const auto ps = gumbel_softmax(ls, noise, g, tau).vec();
    for (std::size_t b = 0; b < rows * g; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < v; ++j) {
        s += p[b * v + j];
        shift_err = std::max(shift_err, std::abs(p[b * v + j] - ps[b * v + j]));
      }
      sum_err = std::max(sum_err, std::abs(s - 1.0));
    }
  }

  // Concentration at tau = 1e-3 on codebooks whose top-two perturbed gap is
  // at least 0.02 (below ~0.007 the bound is false for any implementation).
  const auto pc = gumbel_softmax(l, noise, g, 1e-3).vec();
  std::size_t eligible = 0, concentrated = 0;
  for (std::size_t b = 0; b < rows * g; ++b) {
    double top = -INFINITY, second = -INFINITY;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < v; ++j) {
      const double y = logits[b * v + j] + noise[b * v + j];
      if (y > top) {
        second = top;
        top = y;
        arg = j;
      } else if (y > second) {
        second = y;
      }
    }
    if (top - second < 0.02) continue;
    ++eligible;
    concentrated += pc[b * v + arg] >= 1.0 - 1e-3;
  }

  const double g0 = gumbel_noise(std::exp(-1.0)), g1 = gumbel_noise(std::exp(-std::numbers::e));
  RngStream draws(7, "acceptance.gumbel.mean");
  double mean = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) mean += gumbel_noise(draws.uniform_open());
  mean /= n;

  const bool pass = sum_err <= 1e-6 && shift_err <= 1e-6 && eligible >= (9 * rows * g) / 10 && concentrated == eligible &&
                    std::abs(g0) <= 1e-6 && std::abs(g1 + 1.0) <= 1e-6 && std::abs(mean - std::numbers::egamma) <= 0.01;
  return {pass, fmt("sum err %.1e, shift err %.1e, concentrated %zu/%zu eligible of %zu, g(1/e)=%.1e, "
                    "g(e^-e)=%.7f, mean %.4f",
                    sum_err, shift_err, concentrated, eligible, rows * g, g0, g1, mean)};
}

/// Independent closed form: (GV - sum_g exp(H_g)) / GV.
double diversity_oracle(const std::vector<double>& pbar, std::size_t g) {
  const std::size_t v = pbar.size() / g;
  double s = 0;
  for (std::size_t c = 0; c < g; ++c) {
    double h = 0;
    for (std::size_t j = 0; j < v; ++j) {
      const double p = pbar[c * v + j];
      if (p > 0) h -= p * std::log(p);
    }
    s += std::exp(h);
  }
  return (double(g * v) - s) / double(g * v);
}

Outcome diversity_closed_forms() {
  auto value = [](const std::vector<double>& pbar, std::size_t g) {
    return diversity_loss(Tensor<double>({1, pbar.size()}, pbar), {0}, g).item();
  };
  const double uniform = value(std::vector<double>(640, 1.0 / 320), 2);
  std::vector<double> onehot(640, 0.0);
  onehot[3] = onehot[320 + 200] = 1.0;
  const double peaked = value(onehot, 2);
  const double mixed = value({0.5, 0.5, 1.0, 0.0}, 2);

  RngStream rng(11, "acceptance.diversity");
  double worst_oracle = 0;
  std::size_t out_of_range = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t g = 1 + rng.below(3), v = 2 + rng.below(400);
    std::vector<double> p(g * v);
    for (std::size_t c = 0; c < g; ++c) {
      const double sharp = std::exp(4.0 * rng.uniform());
      double s = 0;
      for (std::size_t j = 0; j < v; ++j) s += (p[c * v + j] = std::pow(rng.uniform_open(), sharp));
      for (std::size_t j = 0; j < v; ++j) p[c * v + j] /= s;
    }
    const double d = value(p, g);
    worst_oracle = std::max(worst_oracle, std::abs(d - diversity_oracle(p, g)));
    out_of_range += d < -1e-12 || d > double(v - 1) / double(v) + 1e-12;
  }
  const bool pass = std::abs(uniform) < 1e-12 && std::abs(peaked - 0.996875) < 1e-12 && std::abs(mixed - 0.25) < 1e-12 &&
                    out_of_range == 0 && worst_oracle < 1e-9;
  return {pass, fmt("uniform %.1e, one-hot %.9f, mixed %.9f, 10^4 draws: %zu out of range, max |d - oracle| %.1e",
                    uniform, peaked, mixed, out_of_range, worst_oracle)};
}

Outcome masking_statistics() {
  const MaskConfig cfg{20, 0.40, 0};
  double lo = 1, hi = 0;
  std::size_t bad_spans = 0, overlaps = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    RngStream rng = RngStream(99, "acceptance.mask").fork(i);
    const auto plan = plan_masks(5000, cfg, rng);
    lo = std::min(lo, plan.masked_fraction());
    hi = std::max(hi, plan.masked_fraction());
    // Count coverage per frame from the index list itself.
    std::vector<int> cover(5000, 0);
    const auto idx = plan.masked_indices();
    bad_spans += idx.size() != plan.span_starts.size() * 20;
    for (std::size_t s = 0; s < plan.span_starts.size(); ++s) {
      for (std::size_t k = 0; k < 20; ++k) {
        const auto t = idx[s * 20 + k];
        bad_spans += t != plan.span_starts[s] + k || t >= 5000;
        if (t < 5000) ++cover[t];
      }
    }
    for (int c : cover) overlaps += c > 1;
  }
  return {lo >= 0.38 && hi <= 0.42 && bad_spans == 0 && overlaps == 0,
          fmt("1000 plans, fraction in [%.4f, %.4f], %zu malformed spans, %zu overlapping frames", lo, hi, bad_spans,
              overlaps)};
}

Outcome schedules() {
  const auto p = TrainConfig::paper();
  const auto s = p.lr_schedule();
  const bool lr_ok = lr_at(s, 0) == 0.0 && lr_at(s, s.warmup_steps) == s.peak_lr && lr_at(s, s.total_steps) == 0.0;
  const auto d = TrainConfig::desk().lr_schedule();
  const bool desk_ok = lr_at(d, 0) == 0.0 && lr_at(d, d.warmup_steps) == d.peak_lr && lr_at(d, d.total_steps) == 0.0;

  const auto& t = p.temperature;
  const auto analytic = static_cast<std::int64_t>(std::ceil(std::log(t.floor / t.start) / std::log(t.decay_factor)));
  std::int64_t iterated = 0;
  while (temperature_at(t, iterated) > t.floor) ++iterated;
  const bool tau_ok = temperature_at(t, 0) == 2.0 && analytic == 277259 && iterated == 277259 &&
                      temperature_at(t, 277258) > 0.5 && temperature_at(t, 277259) == 0.5;
  return {lr_ok && desk_ok && tau_ok,
          fmt("lr (0, peak, 0) exact: %s; tau(0)=%.1f, floor hit analytic %lld, iterated %lld",
              lr_ok && desk_ok ? "yes" : "no", temperature_at(t, 0), static_cast<long long>(analytic),
              static_cast<long long>(iterated))};
}

Outcome end_to_end() {
  const auto corpus = desk_corpus();
  const auto cfg = TrainConfig::desk();
  const auto t0 = Clock::now();
  const auto a = pretrain(cfg, corpus);
  const double wall = seconds_since(t0);
  const auto b = pretrain(cfg, corpus);
  const double ratio = a.final_heldout_recon / a.initial_heldout_recon;
  const bool same = a.trace == b.trace;
  std::string csv = trace_csv_header(cfg.codebook.num_codebooks);
  for (const auto& r : a.trace) csv += trace_csv_row(r);
  detail::write_file(reports_dir() / "desk_trace.csv", csv);
  return {corpus.size() == 200 && a.trace.size() == 2000 && ratio <= 0.6 && wall <= 900 && same,
          fmt("%zu utterances, %zu steps, held-out L1 %.4f -> %.4f (ratio %.3f), %.0fs per run, traces %s",
              corpus.size(), a.trace.size(), a.initial_heldout_recon, a.final_heldout_recon, ratio, wall,
              same ? "bit-identical" : "DIFFER")};
}

const AblationReport& ablation() {
  static const AblationReport rep = [] {
    auto cfg = TrainConfig::desk();
    cfg.total_steps = 500;
    cfg.warmup_steps = 50;
    AblationOptions opt;
    opt.log = [](const std::string& m) {
      std::printf("  [ablation] %s\n", m.c_str());
      std::fflush(stdout);
    };
    auto r = run_ablation(cfg, desk_corpus(), {1, 2, 3, 4, 5}, opt);
    const auto dir = reports_dir();
    detail::write_file(dir / "ablation.csv", ablation_csv(r));
    detail::write_file(dir / "ablation.controls.csv", ablation_controls_csv(r));
    detail::write_file(dir / "ablation.txt", ablation_text(r));
    return r;
  }();
  return rep;
}

Outcome representation_quality() {
  const auto& r = ablation();
  int wins = 0;
  std::string margins;
  for (const auto* row : r.condition(true)) {
    wins += row->probe_accuracy > r.raw_probe_accuracy;
    margins += fmt(" %+.3f", row->probe_accuracy - r.raw_probe_accuracy);
  }
  return {wins >= 4, fmt("frozen beats raw (%.4f) on %d/5 seeds; margins%s", r.raw_probe_accuracy, wins, margins.c_str())};
}

Outcome vq_ablation() {
  const auto& r = ablation();
  const bool structure = r.rows.size() == 10 && r.condition(true).size() == 5 && r.condition(false).size() == 5 &&
                         r.controls.size() == 5 && !ablation_csv(r).empty() &&
                         ablation_text(r).find("NOT reproduced") != std::string::npos;
  bool no_vq_clean = true;
  for (const auto* row : r.condition(false)) no_vq_clean = no_vq_clean && row->perplexities.empty();
  int higher = 0;
  std::string pairs;
  for (const auto& c : r.controls) {
    const double a = mean_of(c.with_diversity), b = mean_of(c.without_diversity);
    higher += a > b;
    pairs += fmt(" %.1f/%.1f", a, b);
  }
  return {structure && no_vq_clean && higher >= 4,
          fmt("table %s, perplexity alpha=0.1 > alpha=0 on %d/5 seeds:%s", structure ? "complete" : "INCOMPLETE", higher,
              pairs.c_str())};
}

/// Runs `f`; true when it throws a DataError subtype, false on success, and
/// rethrows anything else.
bool typed_failure(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError&) {
    return true;
  }
  return false;
}

Outcome persistence() {
  const auto corpus = desk_corpus();
  auto cfg = TrainConfig::desk();
  cfg.total_steps = 40;
  cfg.warmup_steps = 4;
  auto split = split_corpus(corpus, cfg.heldout_fraction);
  Trainer full(cfg, split.train, split.heldout);
  full.run_until(40);
  Trainer first(cfg, split.train, split.heldout);
  first.run_until(20);
  const auto dir = reports_dir() / "persistence";
  fs::create_directories(dir);
  save_checkpoint(snapshot(first), dir / "mid.ckpt");
  const auto ckpt = load_checkpoint(dir / "mid.ckpt");
  save_checkpoint(ckpt, dir / "mid2.ckpt");
  const bool resave = detail::read_file(dir / "mid.ckpt") == detail::read_file(dir / "mid2.ckpt");
  Trainer resumed(ckpt.config, split.train, split.heldout);
  restore(resumed, ckpt);
  resumed.run_until(40);
  bool trace_same = resumed.trace().size() == 20;
  for (std::size_t i = 0; trace_same && i < 20; ++i) trace_same = resumed.trace()[i] == full.trace()[20 + i];

  write_feature_dir(corpus, dir / "features");
  const auto back = read_feature_dir(dir / "features");
  bool features_same = back.size() == corpus.size();
  for (std::size_t i = 0; features_same && i < corpus.size(); ++i) {
    features_same = encode_features(back[i]) == encode_features(corpus[i]) && back[i] == corpus[i];
  }

  // Corruption: every checked checkpoint flip must fail its checksum; every
  // truncation of either format must fail with a typed error.
  const auto good = detail::read_file(dir / "mid.ckpt");
  std::size_t ck_cases = 0, ck_typed = 0;
  for (std::size_t at = 0; at < good.size(); at += 1 + good.size() / 400) {
    auto bad = good;
    bad[at] = static_cast<char>(bad[at] ^ 0x5a);
    ++ck_cases;
    ck_typed += typed_failure([&] { decode_checkpoint(bad); });
  }
  for (std::size_t len = 0; len < good.size(); len += 1 + good.size() / 200) {
    ++ck_cases;
    ck_typed += typed_failure([&] { decode_checkpoint(good.substr(0, len)); });
  }
  const auto feat = encode_features(corpus[0]);
  std::size_t ft_cases = 0, ft_typed = 0;
  for (std::size_t len = 0; len < feat.size(); len += 1 + feat.size() / 300) {
    ++ft_cases;
    ft_typed += typed_failure([&] { decode_features(feat.substr(0, len)); });
  }
  for (std::size_t at : {0, 4, 8, 9, 10, 11, 12, 13, 14, 15}) {
    auto bad = feat;
    bad[at] = '\xff';
    ++ft_cases;
    ft_typed += typed_failure([&] { decode_features(bad); });
  }
  ++ft_cases;
  ft_typed += typed_failure([&] { decode_features(feat + "junk"); });
  fs::remove_all(dir);

  return {trace_same && resave && features_same && ck_typed == ck_cases && ft_typed == ft_cases,
          fmt("resume trace %s, save-load-save %s, feature round trip %s, corrupted checkpoints %zu/%zu typed, "
              "corrupted feature files %zu/%zu typed",
              trace_same ? "bit-exact" : "DIFFERS", resave ? "byte-identical" : "DIFFERS",
              features_same ? "bit-exact" : "DIFFERS", ck_typed, ck_cases, ft_typed, ft_cases)};
}

}  // namespace

int main() {
  std::printf("decoar acceptance run\n");
  report(1, "gradient integrity", gradient_integrity);
  report(2, "Gumbel-Softmax laws", gumbel_laws);
  report(3, "diversity closed forms", diversity_closed_forms);
  report(4, "masking statistics", masking_statistics);
  report(5, "schedules", schedules);
  report(6, "end-to-end training", end_to_end);
  report(7, "representation quality", representation_quality);
  report(8, "quantizer ablation", vq_ablation);
  report(9, "persistence", persistence);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
