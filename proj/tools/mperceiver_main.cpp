#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mp/checkpoint.hpp"
#include "mp/config.hpp"
#include "mp/corpus.hpp"
#include "mp/eval.hpp"
#include "mp/mel.hpp"
#include "mp/synth.hpp"
#include "mp/trainer.hpp"
#include "mp/wav.hpp"

namespace {

using namespace mp;

struct CommonArgs {
  std::string config_path;
  std::string corpus_path;
  std::string out_path;
  std::string split = "test";
  std::string level = "both";
  std::int64_t seed = -1;  // <0: keep config value
  std::string loss_convention;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.loss_convention.empty()) cfg.train.convention = parse_loss_convention(args.loss_convention);
  cfg.finalize();
  return cfg;
}

std::string format_epoch_line(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch=%d train_loss=%.6f val_uar=%.6f lr_mult=%.6f", e.epoch,
                e.train_loss, e.val_uar, e.lr_mult);
  return buf;
}

template <class S>
int run_train_typed(const RunConfig& cfg, const CommonArgs& args) {
  const Corpus corpus = load_corpus(args.corpus_path);
  Model<S> model(cfg.model);
  const std::filesystem::path out_dir(args.out_path);
  std::filesystem::create_directories(out_dir);
  const auto partial_log = out_dir / "epochs.log.partial";
  std::ofstream live(partial_log, std::ios::trunc);
  std::ostringstream log_buffer;

  const auto outcome = train_model<S>(model, corpus, cfg.train, [&](const EpochLog& e) {
    const std::string line = format_epoch_line(e);
    std::cout << line << "\n";
    log_buffer << line << "\n";
    live << line << "\n";
    live.flush();
  });

  live.close();
  atomic_write_file(out_dir / "epochs.log", log_buffer.str());
  std::filesystem::remove(partial_log);
  save_checkpoint(outcome.best, out_dir / "best.ckpt");
  std::cout << "best epoch " << outcome.best_epoch << " validation uar "
            << format_metric(outcome.best_val_uar) << "; checkpoint written to "
            << (out_dir / "best.ckpt").string() << "\n";
  return kExitOk;
}

int run_train(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  if (args.corpus_path.empty()) throw UsageError("train requires --corpus");
  if (args.out_path.empty()) throw UsageError("train requires --out");
  if (cfg.precision == "f64") return run_train_typed<double>(cfg, args);
  return run_train_typed<float>(cfg, args);
}

template <class S>
int run_evaluate_typed(const Checkpoint<S>& ckpt, const CommonArgs& args, const RunConfig& cfg,
                       bool with_metrics) {
  const Model<S> model = model_from_checkpoint(ckpt);
  const Corpus corpus = load_corpus(args.corpus_path);
  const EvalLevel level = parse_eval_level(args.level);
  const EvalResult result =
      evaluate_split(model, corpus, args.split, level, cfg.train.segmentation);

  std::ostringstream jsonl;
  std::ostringstream table;
  if (result.segment_report) {
    jsonl << metrics_to_jsonl_line(*result.segment_report, "segment") << "\n";
    table << metrics_to_table(*result.segment_report, "segment level (" + args.split + ")");
  }
  if (result.participant_report) {
    jsonl << metrics_to_jsonl_line(*result.participant_report, "participant") << "\n";
    table << metrics_to_table(*result.participant_report, "participant level (" + args.split + ")");
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  if (with_metrics) {
    std::cout << table.str();
  }
  if (!args.out_path.empty()) {
    if (with_metrics) {
      const std::filesystem::path out_dir(args.out_path);
      std::filesystem::create_directories(out_dir);
      atomic_write_file(out_dir / "metrics.jsonl", jsonl.str());
      atomic_write_file(out_dir / "metrics.txt", table.str());
      atomic_write_file(out_dir / "predictions.csv", predictions_to_csv(result));
      std::cout << "reports written to " << out_dir.string() << "\n";
    } else {
      atomic_write_file(args.out_path, predictions_to_csv(result));
    }
  } else if (!with_metrics) {
    std::cout << predictions_to_csv(result);
  }
  return kExitOk;
}

int run_evaluate(const std::string& ckpt_path, const CommonArgs& args, bool with_metrics) {
  const RunConfig cfg = resolve_config(args);
  if (args.corpus_path.empty()) throw UsageError("a --corpus file is required");
  const AnyCheckpoint ckpt = load_checkpoint(ckpt_path);
  return std::visit(
      [&](const auto& c) { return run_evaluate_typed(c, args, cfg, with_metrics); }, ckpt);
}

int run_compute_priors(const CommonArgs& args) {
  if (args.corpus_path.empty()) throw UsageError("compute-priors requires --corpus");
  if (args.out_path.empty()) throw UsageError("compute-priors requires --out");
  const Corpus corpus = load_corpus(args.corpus_path);
  const PriorPair priors = build_priors(corpus, "train");
  nlohmann::json j;
  j["width"] = priors.normal.cols();
  j["normal"] = std::vector<double>(priors.normal.raw());
  j["disorder"] = std::vector<double>(priors.disorder.raw());
  atomic_write_file(args.out_path, j.dump() + "\n");
  std::cout << "priors (width " << priors.normal.cols() << ") written to " << args.out_path << "\n";
  return kExitOk;
}

int run_featurize(const CommonArgs& args, int mel_bands) {
  if (args.corpus_path.empty()) throw UsageError("featurize requires --corpus");
  if (args.out_path.empty()) throw UsageError("featurize requires --out");
  Corpus corpus = load_corpus(args.corpus_path);
  const auto base = std::filesystem::path(args.corpus_path).parent_path();
  MelParams params;
  params.bands = mel_bands;
  std::size_t converted = 0;
  for (auto& rec : corpus.records) {
    if (!rec.has_wav() || rec.has_mel()) continue;
    std::filesystem::path wav_path(rec.audio_wav_path);
    if (wav_path.is_relative()) wav_path = base / wav_path;
    const Waveform wav = read_wav(wav_path);
    if (rec.sample_rate != 0 && rec.sample_rate != wav.sample_rate) {
      throw DataError("participant " + rec.participant_id + ": declared sample rate " +
                      std::to_string(rec.sample_rate) + " does not match wav header " +
                      std::to_string(wav.sample_rate));
    }
    rec.audio_mel = mel_spectrogram(wav.samples, wav.sample_rate, params);
    rec.audio_wav_path.clear();
    rec.sample_rate = 0;
    ++converted;
  }
  save_corpus(corpus, args.out_path);
  std::cout << "featurized " << converted << " records into " << args.out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-bottleneck attention classifier for interview screening"};
  app.require_subcommand(1);

  CommonArgs args;
  SynthSpec synth;
  std::int64_t synth_per_class = -1;
  std::int64_t synth_total = -1;
  double synth_positive_rate = -1;
  std::int64_t synth_seed = 0;
  int featurize_bands = 80;
  std::string ckpt_path;

  auto add_common = [&](CLI::App* cmd, bool with_config) {
    cmd->add_option("--corpus", args.corpus_path, "corpus file (one JSON record per line)");
    cmd->add_option("-o,--out", args.out_path, "output path");
    if (with_config) {
      cmd->add_option("-c,--config", args.config_path, "config file");
      cmd->add_option("--seed", args.seed, "override the config seed");
      cmd->add_option("--loss-convention", args.loss_convention,
                      "prose_consistent or literal_paper");
    }
  };

  CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic corpus");
  gen->add_option("--seed", synth_seed, "generator seed");
  gen->add_option("--per-class", synth_per_class, "participants per class");
  gen->add_option("--total", synth_total, "total participants (with --positive-rate)");
  gen->add_option("--positive-rate", synth_positive_rate, "fraction of disorder participants");
  gen->add_option("--separation", synth.separation, "class-mean separation in within-class stds");
  gen->add_option("--text-width", synth.text_width, "text feature width");
  gen->add_option("--mel-bands", synth.mel_bands, "mel band count");
  gen->add_option("--duration-min", synth.duration_min_s, "minimum recording seconds");
  gen->add_option("--duration-max", synth.duration_max_s, "maximum recording seconds");
  gen->add_option("--text-rate", synth.text_rows_per_s, "text rows per second");
  gen->add_option("--mel-rate", synth.mel_rows_per_s, "mel rows per second");
  gen->add_option("-o,--out", args.out_path, "corpus output path")->required();

  CLI::App* priors_cmd = app.add_subcommand("compute-priors", "class centroids from the train split");
  add_common(priors_cmd, false);

  CLI::App* train_cmd = app.add_subcommand("train", "train and write the best checkpoint");
  add_common(train_cmd, true);

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "metric reports for a checkpoint");
  eval_cmd->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  add_common(eval_cmd, true);
  eval_cmd->add_option("--split", args.split, "corpus split (default test)");
  eval_cmd->add_option("--level", args.level, "segment, participant, or both");

  CLI::App* predict_cmd = app.add_subcommand("predict", "per-record predictions as CSV");
  predict_cmd->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  add_common(predict_cmd, true);
  predict_cmd->add_option("--split", args.split, "corpus split (default test)");
  predict_cmd->add_option("--level", args.level, "segment, participant, or both");

  CLI::App* feat_cmd = app.add_subcommand("featurize", "convert WAV records to mel records");
  add_common(feat_cmd, false);
  feat_cmd->add_option("--mel-bands", featurize_bands, "mel band count (default 80)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mp::kExitOk : mp::kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (synth_total >= 0 || synth_positive_rate >= 0) {
        if (synth_total < 1 || synth_positive_rate < 0 || synth_positive_rate > 1) {
          throw UsageError("--total and --positive-rate must be given together and valid");
        }
        if (synth_per_class >= 0) throw UsageError("--per-class conflicts with --total");
        const auto positives = std::llround(synth_positive_rate * static_cast<double>(synth_total));
        synth.per_class_disorder = static_cast<int>(positives);
        synth.per_class_normal = static_cast<int>(synth_total - positives);
      } else if (synth_per_class >= 0) {
        synth.per_class_normal = static_cast<int>(synth_per_class);
        synth.per_class_disorder = static_cast<int>(synth_per_class);
      }
      synth.seed = static_cast<std::uint64_t>(synth_seed);
      save_corpus(generate_synthetic(synth), args.out_path);
      std::cout << "synthetic corpus (" << synth.per_class_normal << "+" << synth.per_class_disorder
                << " participants) written to " << args.out_path << "\n";
      return kExitOk;
    }
    if (priors_cmd->parsed()) return run_compute_priors(args);
    if (train_cmd->parsed()) return run_train(args);
    if (eval_cmd->parsed()) return run_evaluate(ckpt_path, args, /*with_metrics=*/true);
    if (predict_cmd->parsed()) return run_evaluate(ckpt_path, args, /*with_metrics=*/false);
    if (feat_cmd->parsed()) return run_featurize(args, featurize_bands);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
