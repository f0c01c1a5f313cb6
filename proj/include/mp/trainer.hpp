#pragma once

#include <functional>
#include <limits>
#include <sstream>

#include "mp/checkpoint.hpp"
#include "mp/corpus.hpp"
#include "mp/eval.hpp"
#include "mp/losses.hpp"
#include "mp/priors.hpp"
#include "mp/rng.hpp"

namespace mp {

struct TrainConfig {
  double lr = 3e-5;
  int epochs = 200;
  int patience = 15;
  int batch_size = 16;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  enum class Schedule { linear, constant, table };
  Schedule schedule = Schedule::linear;
  double schedule_end_factor = 0.1;
  std::vector<double> schedule_table;

  LossConvention convention = LossConvention::prose_consistent;
  std::uint64_t seed = 0;
  double improvement_eps = 1e-6;  // below float noise, above double noise
  SegmentationParams segmentation;

  void validate() const {
    if (lr <= 0) throw ConfigError("learning rate must be > 0");
    if (epochs < 1) throw ConfigError("epoch count must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (weight_decay < 0) throw ConfigError("weight decay must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (eps <= 0) throw ConfigError("Adam epsilon must be > 0");
    if (schedule == Schedule::table && schedule_table.empty()) {
      throw ConfigError("table schedule requires a factor table");
    }
    for (double f : schedule_table) {
      if (f <= 0) throw ConfigError("non-positive learning-rate multiplier in schedule table");
    }
    if (schedule == Schedule::linear && schedule_end_factor <= 0) {
      throw ConfigError("non-positive learning-rate multiplier at the schedule endpoint");
    }
    segmentation.validate();
  }
};

/// Per-epoch learning-rate multiplier. The default decays linearly from 1.0
/// at epoch 0 to the end factor at the final epoch.
inline double lr_multiplier(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw ConfigError("epoch index must be >= 0");
  double mult = 1.0;
  switch (cfg.schedule) {
    case TrainConfig::Schedule::constant:
      mult = 1.0;
      break;
    case TrainConfig::Schedule::linear: {
      if (cfg.epochs <= 1) {
        mult = 1.0;
      } else {
        const double frac =
            std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1));
        mult = 1.0 - (1.0 - cfg.schedule_end_factor) * frac;
      }
      break;
    }
    case TrainConfig::Schedule::table: {
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(epoch),
                                                  cfg.schedule_table.size() - 1);
      mult = cfg.schedule_table[i];
      break;
    }
  }
  if (mult <= 0) throw ConfigError("non-positive learning-rate multiplier at epoch " +
                                   std::to_string(epoch));
  return mult;
}

/// Patience counter over a maximized metric; an improvement must exceed
/// `eps` to reset the counter.
class EarlyStopTracker {
 public:
  EarlyStopTracker(int patience, double eps) : patience_(patience), eps_(eps) {}

  bool update(double value, int epoch) {
    if (value > best_ + eps_) {
      best_ = value;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double eps_;
  double best_ = -std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int stale_ = 0;
};

/// One AdamW update: bias-corrected moments drive the adaptive step, weight
/// decay shrinks parameters separately (w -= lr * wd * w). Frozen parameters
/// have no gradient entry and are never touched.
template <class S>
void adamw_step(ParamStore<S>& params, const ad::GradTape<S>& grads, AdamState<S>& state,
                const TrainConfig& cfg, double lr_mult) {
  const double lr = cfg.lr * lr_mult;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& name : grads.names) {
    const Tensor<S>& g = grads.at(name);
    if (!g.all_finite()) {
      throw NumericalError("non-finite gradient for parameter '" + name + "'");
    }
    Tensor<S>& w = params.value(name);
    auto [mi, m_new] = state.m.try_emplace(name, Tensor<S>(g.rows(), g.cols()));
    auto [vi, v_new] = state.v.try_emplace(name, Tensor<S>(g.rows(), g.cols()));
    Tensor<S>& m = mi->second;
    Tensor<S>& v = vi->second;
    const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S gi = g.raw()[i];
      m.raw()[i] = b1 * m.raw()[i] + (S(1) - b1) * gi;
      v.raw()[i] = b2 * v.raw()[i] + (S(1) - b2) * gi * gi;
      const double mhat = static_cast<double>(m.raw()[i]) / bc1;
      const double vhat = static_cast<double>(v.raw()[i]) / bc2;
      const double adaptive = lr * mhat / (std::sqrt(vhat) + cfg.eps);
      const double decay = lr * cfg.weight_decay * static_cast<double>(w.raw()[i]);
      w.raw()[i] = static_cast<S>(static_cast<double>(w.raw()[i]) - adaptive - decay);
    }
  }
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_uar = 0;
  double lr_mult = 1.0;
};

template <class S>
struct TrainOutcome {
  Checkpoint<S> best;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_uar = 0;
  int epochs_run = 0;
};

/// Class centroids from the training split's pooled text representations.
inline PriorPair build_priors(const Corpus& corpus, const std::string& split = "train") {
  std::vector<std::vector<double>> reps[2];
  for (const ParticipantRecord* rec : corpus.split(split)) {
    if (!rec->has_text()) continue;
    reps[rec->label].push_back(mean_pool_rows(rec->text_features));
  }
  PriorPair priors;
  if (reps[0].empty() || reps[1].empty()) {
    throw DataError("category has no training samples with text features (class " +
                    std::string(reps[0].empty() ? "0" : "1") + ")");
  }
  priors.normal = compute_category_prior(reps[0]);
  priors.disorder = compute_category_prior(reps[1]);
  return priors;
}

namespace train_detail {

template <class S>
struct Sample {
  Tensor<S> text;
  Tensor<S> mel;
  int label = 0;
};

template <class S>
Sample<S> to_sample(const RawSegment& seg) {
  Sample<S> s;
  s.text = seg.text.template cast<S>();
  s.mel = seg.mel.template cast<S>();
  s.label = seg.label;
  return s;
}

template <class S>
double participant_uar(const Model<S>& model,
                       const std::vector<std::vector<Sample<S>>>& participants,
                       const std::vector<int>& labels) {
  std::vector<double> means(participants.size());
  parallel_for(participants.size(), [&](std::size_t i) {
    double sum = 0;
    for (const Sample<S>& s : participants[i]) {
      const Prediction p =
          model.predict(s.text.empty() ? nullptr : &s.text, s.mel.empty() ? nullptr : &s.mel);
      sum += p.probabilities[1];
    }
    means[i] = sum / static_cast<double>(participants[i].size());
  });
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    cm.add(labels[i], means[i] >= 0.5 ? 1 : 0);
  }
  return compute_metrics(cm).uar;
}

}  // namespace train_detail

/// The optimization harness: seeded shuffling into mini-batches, AdamW with
/// the configured schedule, validation UAR (participant level) for model
/// selection, early stopping once `patience` consecutive epochs fail to
/// improve the best UAR.
template <class S>
TrainOutcome<S> train_model(Model<S>& model, const Corpus& corpus, const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  const auto train_records = corpus.split("train");
  if (train_records.empty()) throw DataError("training split is empty");
  bool seen[2] = {false, false};
  for (const auto* r : train_records) seen[r->label] = true;
  if (!seen[0] || !seen[1]) throw DataError("training split must contain both classes");
  const auto val_records = corpus.split("validation");
  if (val_records.empty()) throw DataError("validation split is empty");

  if (!model.priors_ready()) model.set_priors(build_priors(corpus, "train"));

  using train_detail::Sample;
  std::vector<Sample<S>> train_samples;
  for (const auto* rec : train_records) {
    for (const RawSegment& seg : segment_record(*rec, cfg.segmentation)) {
      train_samples.push_back(train_detail::to_sample<S>(seg));
    }
  }
  if (train_samples.empty()) throw DataError("training split produced no segments");

  std::vector<std::vector<Sample<S>>> val_participants;
  std::vector<int> val_labels;
  for (const auto* rec : val_records) {
    std::vector<Sample<S>> segs;
    for (const RawSegment& seg : segment_record(*rec, cfg.segmentation)) {
      segs.push_back(train_detail::to_sample<S>(seg));
    }
    if (segs.empty()) continue;
    val_participants.push_back(std::move(segs));
    val_labels.push_back(rec->label);
  }
  if (val_participants.empty()) throw DataError("validation split produced no segments");

  RandomSource rng(cfg.seed);
  AdamState<S> state;
  EarlyStopTracker tracker(cfg.patience, cfg.improvement_eps);
  TrainOutcome<S> outcome;

  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double mult = lr_multiplier(cfg, epoch);
    rng.shuffle(order);
    double loss_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      try {
        ad::Graph<S> g(model.params(), /*enable_grad=*/true);
        ad::Var<S> batch_total;
        for (std::size_t i = begin; i < end; ++i) {
          const Sample<S>& s = train_samples[order[i]];
          typename Model<S>::Output out =
              model.forward(g, s.text.empty() ? nullptr : &s.text, s.mel.empty() ? nullptr : &s.mel);
          LossVars<S> loss = total_loss_graph(g, out, s.label, cfg.convention);
          loss_sum += static_cast<double>(loss.total.value()(0, 0));
          batch_total = batch_total.valid() ? ad::add(batch_total, loss.total) : loss.total;
        }
        batch_total = ad::scale(batch_total, static_cast<S>(1.0 / static_cast<double>(end - begin)));
        const S batch_value = batch_total.value()(0, 0);
        if (!std::isfinite(static_cast<double>(batch_value))) {
          throw NumericalError("non-finite batch loss");
        }
        ad::backward(batch_total);
        adamw_step(model.params(), g.collect(), state, cfg, mult);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train_samples.size());
    entry.lr_mult = mult;
    entry.val_uar = train_detail::participant_uar(model, val_participants, val_labels);
    outcome.log.push_back(entry);
    outcome.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(entry);

    if (tracker.update(entry.val_uar, epoch)) {
      outcome.best.config = model.config();
      outcome.best.params = model.params();
      outcome.best.opt = state;
      outcome.best.epoch = epoch;
      outcome.best.best_metric = entry.val_uar;
      std::ostringstream rs;
      rs << rng.engine();
      outcome.best.rng_state = rs.str();
      outcome.best.convention = cfg.convention;
      outcome.best.priors_set = true;
    }
    if (tracker.should_stop()) break;
  }

  outcome.best_epoch = tracker.best_epoch();
  outcome.best_val_uar = tracker.best();
  return outcome;
}

}  // namespace mp
