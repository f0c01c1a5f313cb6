// Acceptance suite: one criterion per invocation (argv[1] in 1..9), or all
// when no argument is given. Prints one [PASS]/[FAIL] line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mp/checkpoint.hpp"
#include "mp/config.hpp"
#include "mp/corpus.hpp"
#include "mp/eval.hpp"
#include "mp/layers.hpp"
#include "mp/losses.hpp"
#include "mp/mel.hpp"
#include "mp/metrics.hpp"
#include "mp/model.hpp"
#include "mp/synth.hpp"
#include "mp/trainer.hpp"
#include "test_support.hpp"

using namespace mp;

namespace {

using Clock = std::chrono::steady_clock;

struct Criterion {
  int id;
  std::string description;
  bool (*run)(std::string& detail);
};

ModelConfig tiny_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input_width = 8;
  cfg.latent_width = 8;
  cfg.query_width = 8;
  cfg.output_width = 8;
  cfg.depth = 2;
  cfg.heads = 1;
  cfg.mel_bands = 4;
  cfg.seed = seed;
  return cfg;
}

Model<double> pinned_model(std::uint64_t k) {
  Model<double> model(tiny_config(k));
  mp_test::randomize_all(model.params(), k * 31 + 7, 0.3);
  model.set_priors({mp_test::random_tensor<double>(1, 8, k + 100),
                    mp_test::random_tensor<double>(1, 8, k + 200)});
  return model;
}

// ---------------------------------------------------------------------------
// 1. gradient suite
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;

  {  // (a) one attention block
    const AttentionConfig cfg{6, 5, 6, 1};
    ParamStore<double> store(13);
    attention_init(store, "blk", cfg);
    mp_test::randomize_all(store, 14, 0.4);
    const auto q = mp_test::random_tensor<double>(2, 6, 31, 0.7);
    const auto kv = mp_test::random_tensor<double>(4, 5, 32, 0.7);
    const double err = ad::finite_diff_check(store, [&](ad::Graph<double>& g) {
      auto out = attention_forward(g, "blk", cfg, g.constant(q), g.constant(kv));
      return ad::mean_all(ad::hadamard(out, out));
    });
    d << "attention block err=" << err;
    ok = ok && err < 1e-4;
  }

  {  // (b) encode -> process(k=2) -> decode end-to-end, D_*=8, M=5
    // h = 1e-3: central differences at 1e-5 cannot resolve the genuinely
    // small score gradients of 2-row self-attention
    Model<double> model = pinned_model(4);
    const auto text = mp_test::random_tensor<double>(3, 8, 304, 0.7);
    const auto mel = mp_test::random_tensor<double>(2, 4, 404, 0.7);  // fused M = 5
    const double err = ad::finite_diff_check(model.params(), [&](ad::Graph<double>& g) {
      auto out = model.forward(g, &text, &mel);
      auto cat = ad::concat_cols(ad::concat_cols(out.logits_c0, out.logits_c1), out.fused);
      return ad::mean_all(ad::hadamard(cat, cat));
    }, 1e-3);
    d << "; end-to-end err=" << err;
    ok = ok && err < 1e-4;
  }

  {  // (c) both loss conventions
    Model<double> model = pinned_model(29);
    const auto text = mp_test::random_tensor<double>(3, 8, 329, 0.7);
    const auto mel = mp_test::random_tensor<double>(2, 4, 429, 0.7);
    for (auto conv : {LossConvention::prose_consistent, LossConvention::literal_paper}) {
      const double err = ad::finite_diff_check(model.params(), [&](ad::Graph<double>& g) {
        auto out = model.forward(g, &text, &mel);
        return total_loss_graph(g, out, conv == LossConvention::prose_consistent ? 1 : 0, conv)
            .total;
      }, 1e-3);
      d << "; " << to_string(conv) << " err=" << err;
      ok = ok && err < 1e-4;
    }
  }

  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  d << "; runtime " << seconds << " s";
  ok = ok && seconds < 60.0;
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 2. published-benchmark arithmetic
// ---------------------------------------------------------------------------

struct BenchRow {
  const char* dataset;
  const char* method;
  double acc, uar, sens, spec;
};

// Published comparison rows: UAR must equal (Sens + Spec) / 2 up to 2-decimal
// rounding of each reported value.
const BenchRow kBenchRows[] = {
    {"anxiety", "svm", 0.83, 0.64, 0.41, 0.87},
    {"anxiety", "random-forest", 0.82, 0.63, 0.39, 0.87},
    {"anxiety", "xgboost", 0.88, 0.60, 0.25, 0.94},
    {"anxiety", "nusd", 0.79, 0.51, 0.17, 0.85},
    {"anxiety", "conv-lstm", 0.83, 0.55, 0.21, 0.90},
    {"anxiety", "perceiver-io", 0.83, 0.74, 0.63, 0.84},
    {"anxiety", "afabnet", 0.82, 0.63, 0.41, 0.86},
    {"anxiety", "qwen2-audio", 0.72, 0.76, 0.80, 0.71},
    {"anxiety", "prior-guided-perceiver", 0.85, 0.76, 0.65, 0.87},
    {"depression", "svm", 0.76, 0.71, 0.63, 0.79},
    {"depression", "random-forest", 0.76, 0.63, 0.41, 0.85},
    {"depression", "xgboost", 0.78, 0.64, 0.41, 0.88},
    {"depression", "nusd", 0.67, 0.51, 0.26, 0.78},
    {"depression", "conv-lstm", 0.77, 0.53, 0.14, 0.93},
    {"depression", "perceiver-io", 0.81, 0.77, 0.66, 0.85},
    {"depression", "afabnet", 0.78, 0.58, 0.24, 0.92},
    {"depression", "qwen2-audio", 0.79, 0.58, 0.21, 0.94},
    {"depression", "prior-guided-perceiver", 0.85, 0.79, 0.69, 0.89},
    {"daic-woz", "svm", 0.38, 0.35, 0.29, 0.42},
    {"daic-woz", "random-forest", 0.70, 0.54, 0.14, 0.94},
    {"daic-woz", "xgboost", 0.60, 0.53, 0.36, 0.70},
    {"daic-woz", "nusd", 0.55, 0.46, 0.21, 0.70},
    {"daic-woz", "conv-lstm", 0.40, 0.57, 0.88, 0.22},
    {"daic-woz", "perceiver-io", 0.70, 0.58, 0.29, 0.88},
    {"daic-woz", "afabnet", 0.74, 0.63, 0.36, 0.91},
    {"daic-woz", "qwen2-audio", 0.70, 0.65, 0.52, 0.78},
    {"daic-woz", "prior-guided-perceiver", 0.79, 0.66, 0.36, 0.97},
};

bool criterion_benchmark_arithmetic(std::string& detail) {
  std::ostringstream d;
  int failures = 0;
  int checked = 0;
  for (const BenchRow& row : kBenchRows) {
    ++checked;
    const double recomputed = (row.sens + row.spec) / 2.0;
    const double diff = std::abs(row.uar - recomputed);
    if (diff > 0.005 + 1e-12) {
      ++failures;
      char buf[160];
      std::snprintf(buf, sizeof(buf), " [%s/%s uar=%.2f vs (%.2f+%.2f)/2=%.3f diff=%.3f]",
                    row.dataset, row.method, row.uar, row.sens, row.spec, recomputed, diff);
      d << buf;
    }
  }
  d << " (" << checked - failures << "/" << checked << " rows consistent within 0.005)";
  detail = d.str();
  return failures == 0;
}

// ---------------------------------------------------------------------------
// 3. closed-form loss oracle
// ---------------------------------------------------------------------------

bool criterion_loss_oracle(std::string& detail) {
  std::ostringstream d;
  bool ok = true;

  // a uniform-probability forward: zeroed classification head
  Model<double> model = pinned_model(3);
  model.params().set("head.w", Tensor<double>(8, 2));
  model.params().set("head.b", Tensor<double>(1, 2));
  const auto text = mp_test::random_tensor<double>(4, 8, 77);
  ad::Graph<double> g(model.params(), false);
  auto out = model.forward(g, &text, nullptr);
  const auto losses =
      total_loss_graph(g, out, 1, LossConvention::prose_consistent).breakdown(LossConvention::prose_consistent);
  const double match_err = std::abs(losses.match_loss - 2.0 * std::log(2.0));
  const double cls_err = std::abs(losses.cls_loss - std::log(2.0));
  d << "uniform forward: |match - 2ln2|=" << match_err << ", |cls - ln2|=" << cls_err;
  ok = ok && match_err < 1e-6 && cls_err < 1e-6;

  // documented example: label 1, fused probabilities [0.25, 0.75]
  ClassWiseOutput example;
  example.probs_c0 = {0.5, 0.5};
  example.probs_c1 = {0.5, 0.5};
  example.probabilities = {0.25, 0.75};
  const double prose = classification_loss(example, 1, LossConvention::prose_consistent);
  const double literal = classification_loss(example, 1, LossConvention::literal_paper);
  const double prose_err = std::abs(prose - (-std::log(0.75)));
  const double literal_err = std::abs(literal - (-std::log(0.25)));
  d << "; conventions: |prose + ln 0.75|=" << prose_err << ", |literal + ln 0.25|=" << literal_err;
  ok = ok && prose_err < 1e-9 && literal_err < 1e-9;
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 4. synthetic end-to-end through the CLI
// ---------------------------------------------------------------------------

bool criterion_end_to_end(std::string& detail) {
  const char* cli = std::getenv("MP_CLI_BIN");
  if (!cli) {
    detail = "MP_CLI_BIN not set";
    return false;
  }
  mp_test::TempDir dir("acceptance-e2e");
  const auto corpus = dir.path() / "synth.jsonl";
  const auto t0 = Clock::now();

  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > " +
                            (dir.path() / "out.txt").string() + " 2> " +
                            (dir.path() / "err.txt").string();
    return std::system(cmd.c_str());
  };

  if (run("gen-synth --seed 7 --per-class 100 --separation 4.0 -o " + corpus.string()) != 0) {
    detail = "gen-synth failed";
    return false;
  }
  atomic_write_file(dir.path() / "config.toml", "seed = 7\n[train]\nepochs = 50\n");
  if (run("train -c " + (dir.path() / "config.toml").string() + " --corpus " + corpus.string() +
          " -o " + (dir.path() / "run").string()) != 0) {
    detail = "train failed";
    return false;
  }
  if (run("evaluate " + (dir.path() / "run" / "best.ckpt").string() + " --corpus " +
          corpus.string() + " --split test --level participant -o " +
          (dir.path() / "eval").string()) != 0) {
    detail = "evaluate failed";
    return false;
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  double uar = -1;
  std::ifstream metrics(dir.path() / "eval" / "metrics.jsonl");
  std::string line;
  while (std::getline(metrics, line)) {
    const auto pos = line.find("\"uar\":\"");
    if (pos != std::string::npos && line.find("participant") != std::string::npos) {
      uar = std::stod(line.substr(pos + 7));
    }
  }
  std::ostringstream d;
  d << "test participant uar=" << uar << " (threshold 0.95), wall " << static_cast<int>(seconds)
    << " s (budget 600), lr 3e-5, patience 15, <= 50 epochs";
  detail = d.str();
  return uar >= 0.95 && seconds < 600.0;
}

// ---------------------------------------------------------------------------
// 5. segmentation oracle
// ---------------------------------------------------------------------------

bool criterion_segmentation(std::string& detail) {
  std::ostringstream d;
  bool ok = true;
  for (double duration : {45.0, 60.0, 65.0, 120.0, 300.0}) {
    // brute-force enumeration of starts at stride 50 with the 5 s tail rule
    std::vector<std::pair<double, double>> expected;
    for (int i = 0;; ++i) {
      const double start = 50.0 * i;
      if (start >= duration) break;
      const double end = std::min(start + 60.0, duration);
      if (end - start >= 5.0) expected.emplace_back(start, end);
    }
    const auto got = segment_windows(duration);
    bool match = got.size() == expected.size();
    for (std::size_t i = 0; match && i < got.size(); ++i) {
      match = got[i].start == expected[i].first && got[i].end == expected[i].second;
    }
    d << duration << "s:" << got.size() << (match ? " ok" : " MISMATCH") << " ";
    ok = ok && match;
  }
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 6. metrics oracle
// ---------------------------------------------------------------------------

bool criterion_metrics(std::string& detail) {
  RandomSource rng(4242);
  int checked = 0;
  int mismatches = 0;
  while (checked < 1000) {
    ConfusionMatrix cm{static_cast<std::int64_t>(rng.below(40)), static_cast<std::int64_t>(rng.below(40)),
                       static_cast<std::int64_t>(rng.below(40)), static_cast<std::int64_t>(rng.below(40))};
    if (cm.total() == 0) continue;
    ++checked;
    const auto r = compute_metrics(cm);
    auto safe = [](std::int64_t num, std::int64_t den) {
      return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    const double acc = safe(cm.tp + cm.tn, cm.total());
    const double sens = safe(cm.tp, cm.tp + cm.fn);
    const double spec = safe(cm.tn, cm.tn + cm.fp);
    const double uar = (sens + spec) / 2.0;
    const bool match = r.accuracy == acc && r.sensitivity == sens && r.specificity == spec &&
                       r.uar == uar && r.per_class[1].precision == safe(cm.tp, cm.tp + cm.fp) &&
                       r.per_class[1].f1 == safe(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn) &&
                       r.per_class[0].precision == safe(cm.tn, cm.tn + cm.fn) &&
                       r.per_class[0].f1 == safe(2 * cm.tn, 2 * cm.tn + cm.fn + cm.fp);
    if (!match) ++mismatches;
  }
  std::ostringstream d;
  d << checked << " random matrices, " << mismatches << " mismatches against the direct formulas";
  detail = d.str();
  return mismatches == 0;
}

// ---------------------------------------------------------------------------
// 7. mel featurizer
// ---------------------------------------------------------------------------

bool criterion_mel(std::string& detail) {
  std::ostringstream d;
  bool ok = true;

  std::vector<double> silence(16000, 0.0);
  const auto mel_silence = mel_spectrogram(silence, 16000);
  ok = ok && mel_silence.rows() == 98 && mel_silence.cols() == 80;
  d << "silence " << mel_silence.rows() << "x" << mel_silence.cols();
  const double floor_log = std::log(1e-10);
  for (double v : mel_silence.raw()) ok = ok && v == floor_log;
  d << (ok ? " at floor" : " NOT at floor");

  std::vector<double> tone(16000);
  for (std::size_t i = 0; i < tone.size(); ++i) {
    tone[i] = 0.5 * std::sin(2 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
  }
  const auto mel_tone = mel_spectrogram(tone, 16000);
  ok = ok && mel_tone.rows() == 98 && mel_tone.cols() == 80;

  // filterbank-center oracle
  int oracle_band = 0;
  double best = 1e18;
  for (int b = 0; b < 80; ++b) {
    const double center = mel_to_hz(hz_to_mel(8000.0) * (b + 1) / 81.0);
    if (std::abs(center - 440.0) < best) {
      best = std::abs(center - 440.0);
      oracle_band = b;
    }
  }
  bool argmax_ok = true;
  for (std::int64_t f = 0; f < mel_tone.rows(); ++f) {
    int argmax = 0;
    for (int b = 1; b < 80; ++b) {
      if (mel_tone(f, b) > mel_tone(f, argmax)) argmax = b;
    }
    argmax_ok = argmax_ok && argmax == oracle_band;
  }
  d << "; tone 98x80, argmax band " << oracle_band << (argmax_ok ? " every frame" : " MISMATCH");
  detail = d.str();
  return ok && argmax_ok;
}

// ---------------------------------------------------------------------------
// 8. determinism and persistence
// ---------------------------------------------------------------------------

Corpus determinism_corpus(std::uint64_t seed) {
  SynthSpec spec;
  spec.per_class_normal = 10;
  spec.per_class_disorder = 10;
  spec.text_width = 8;
  spec.mel_bands = 4;
  spec.duration_min_s = 10;
  spec.duration_max_s = 20;
  spec.text_rows_per_s = 0.4;
  spec.mel_rows_per_s = 0.5;
  spec.seed = seed;
  return generate_synthetic(spec);
}

bool criterion_determinism(std::string& detail) {
  std::ostringstream d;
  bool ok = true;
  const Corpus corpus = determinism_corpus(21);

  TrainConfig tc;
  tc.epochs = 13;  // batch 2 over ~16 train segments: >= 100 optimizer steps
  tc.patience = 20;
  tc.batch_size = 2;
  tc.lr = 1e-3;
  tc.seed = 9;

  // two identical f32 runs must produce bitwise-identical epoch logs
  Model<float> m1(tiny_config(2));
  Model<float> m2(tiny_config(2));
  const auto o1 = train_model(m1, corpus, tc);
  const auto o2 = train_model(m2, corpus, tc);
  bool logs_equal = o1.log.size() == o2.log.size();
  for (std::size_t i = 0; logs_equal && i < o1.log.size(); ++i) {
    logs_equal = o1.log[i].train_loss == o2.log[i].train_loss &&
                 o1.log[i].val_uar == o2.log[i].val_uar;
  }
  d << "epoch logs " << (logs_equal ? "bitwise identical" : "DIFFER") << " over "
    << o1.log.size() << " epochs";
  ok = ok && logs_equal;

  // frozen priors bitwise unchanged after >= 100 optimizer steps
  std::int64_t train_segments = 0;
  for (const auto* rec : corpus.split("train")) {
    train_segments += static_cast<std::int64_t>(segment_record(*rec, tc.segmentation).size());
  }
  const std::int64_t steps_per_epoch = (train_segments + tc.batch_size - 1) / tc.batch_size;
  const std::int64_t total_steps = steps_per_epoch * static_cast<std::int64_t>(o1.log.size());
  Model<float> probe(tiny_config(2));
  probe.set_priors(build_priors(corpus, "train"));
  const bool priors_frozen = m1.params().value("prior.c0") == probe.params().value("prior.c0") &&
                             m1.params().value("prior.c1") == probe.params().value("prior.c1");
  d << "; priors " << (priors_frozen ? "frozen" : "CHANGED") << " after " << total_steps
    << " steps";
  ok = ok && priors_frozen && total_steps >= 100;

  // checkpoint round-trip: bitwise-identical predictions on 10 random inputs
  mp_test::TempDir dir("acceptance-ckpt");
  save_checkpoint(o1.best, dir.path() / "best.ckpt");
  const auto loaded = load_checkpoint(dir.path() / "best.ckpt");
  const Model<float> before = model_from_checkpoint(o1.best);
  const Model<float> after = model_from_checkpoint(std::get<Checkpoint<float>>(loaded));
  bool roundtrip = true;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto text = mp_test::random_tensor<float>(3 + (s % 3), 8, 900 + s);
    const auto a = before.predict(&text, nullptr);
    const auto b = after.predict(&text, nullptr);
    roundtrip = roundtrip && a.probabilities == b.probabilities && a.predicted == b.predicted;
  }
  d << "; round-trip predictions " << (roundtrip ? "bitwise identical" : "DIFFER");
  ok = ok && roundtrip;
  detail = d.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 9. residual identity
// ---------------------------------------------------------------------------

bool criterion_residual_identity(std::string& detail) {
  std::ostringstream d;
  bool ok = true;

  // full attention block with default (zero) output/MLP projections
  const AttentionConfig cfg{8, 6, 8, 1};
  ParamStore<double> store(5);
  attention_init(store, "blk", cfg);
  const auto q = mp_test::random_tensor<double>(3, 8, 50);
  ad::Graph<double> g(store, false);
  const auto out = attention_forward(g, "blk", cfg, g.constant(q),
                                     g.constant(mp_test::random_tensor<double>(7, 6, 51)));
  const bool block_identity = out.value() == q;
  d << "attention block identity: " << (block_identity ? "exact" : "VIOLATED");
  ok = ok && block_identity;

  // process stack with default init
  Model<double> model(tiny_config(6));
  const auto z = mp_test::random_tensor<double>(2, 8, 52);
  ad::Graph<double> g2(model.params(), false);
  const bool stack_identity = model.process(g2, g2.constant(z)).value() == z;
  d << "; latent stack identity: " << (stack_identity ? "exact" : "VIOLATED");
  ok = ok && stack_identity;
  detail = d.str();
  return ok;
}

const Criterion kCriteria[] = {
    {1, "gradient suite (< 1e-4 rel error, < 60 s)", criterion_gradients},
    {2, "published-benchmark UAR arithmetic (|uar - mean(sens,spec)| <= 0.005)",
     criterion_benchmark_arithmetic},
    {3, "closed-form loss oracle", criterion_loss_oracle},
    {4, "synthetic end-to-end training (uar >= 0.95, < 10 min)", criterion_end_to_end},
    {5, "segmentation window oracle", criterion_segmentation},
    {6, "metrics against direct formulas (1000 random matrices)", criterion_metrics},
    {7, "mel featurizer oracles", criterion_mel},
    {8, "determinism and persistence", criterion_determinism},
    {9, "residual identity at zero init", criterion_residual_identity},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", c.id, c.description.c_str(),
                detail.c_str());
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
