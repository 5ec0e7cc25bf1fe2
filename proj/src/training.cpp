#include "btn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "btn/ops.hpp"

namespace btn {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(clip_norm >= 0) || !std::isfinite(clip_norm))
    throw std::invalid_argument("TrainConfig: clip_norm must be finite and >= 0");
}

std::vector<ScoredSample> score_events(Model& model, std::span<const JetEvent> events, std::size_t batch_size) {
  const auto z = model.logits(events, batch_size);
  std::vector<ScoredSample> out(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) out[i] = {z[i][1] - z[i][0], events[i].label};
  return out;
}

double evaluate_loss(Model& model, std::span<const JetEvent> events, std::size_t batch_size) {
  if (events.empty()) throw std::invalid_argument("evaluate_loss: no events");
  const auto z = model.logits(events, batch_size);
  std::vector<double> flat;
  std::vector<int> labels;
  flat.reserve(2 * z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    flat.push_back(z[i][0]);
    flat.push_back(z[i][1]);
    labels.push_back(events[i].label);
  }
  return ad::cross_entropy_loss(flat, labels);
}

namespace {

double safe_auc(std::span<const ScoredSample> s) {
  const bool sig = std::any_of(s.begin(), s.end(), [](const ScoredSample& x) { return x.label == 1; });
  const bool bkg = std::any_of(s.begin(), s.end(), [](const ScoredSample& x) { return x.label == 0; });
  return sig && bkg ? roc_auc(s) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TrainResult train_model(Model& model, std::span<const JetEvent> train, std::span<const JetEvent> val,
                        const TrainConfig& cfg, const std::optional<Checkpoint>& resume,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty() || val.empty()) throw std::invalid_argument("train_model: empty training or validation set");
  ad::ParamStore& store = model.params();

  ad::AdamState adam;
  adam.config.lr = cfg.lr;
  adam.m.assign(store.size(), 0.0);
  adam.v.assign(store.size(), 0.0);
  std::uint64_t first_epoch = 1;
  if (resume) {
    if (!(resume->config == model.config())) throw std::invalid_argument("train_model: checkpoint config differs");
    if (resume->params.size() != store.size()) throw std::invalid_argument("train_model: checkpoint size differs");
    std::copy(resume->params.begin(), resume->params.end(), store.values().begin());
    if (resume->adam) {
      adam = *resume->adam;
      adam.config.lr = cfg.lr;
    }
    first_epoch = resume->epoch + 1;
  }

  TrainResult result;
  std::vector<double> best(store.values().begin(), store.values().end());
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.best_epoch = first_epoch - 1;
  if (resume) result.best_val_loss = evaluate_loss(model, val);

  std::vector<std::size_t> order(train.size());
  std::vector<JetEvent> batch_events;
  std::size_t stale = 0;
  const std::uint64_t last_epoch = first_epoch + cfg.epochs - 1;
  for (std::uint64_t epoch = first_epoch; epoch <= last_epoch; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq sequence{cfg.seed, epoch, std::uint64_t{0x7261696e}};
    std::mt19937_64 rng(sequence);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      batch_events.clear();
      const Rotation spin = cfg.augment ? Rotation::from_axis_angle(Vec3::UnitZ(), angle(rng)) : Rotation();
      for (std::size_t i = 0; i < n; ++i) {
        const JetEvent& e = train[order[start + i]];
        batch_events.push_back(cfg.augment ? rotate_event(e, spin) : e);
      }
      const EventBatch batch = model.prepare(batch_events);
      ad::Tape tape(store, true);
      const ad::NodeId loss = ops::softmax_cross_entropy(tape, model.forward(tape, batch), batch.labels);
      const double value = tape.value(loss).data[0];
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch starting at " << start
            << " (lr " << cfg.lr << ")";
        throw std::runtime_error(msg.str());
      }
      tape.backward(loss);
      if (cfg.clip_norm > 0) {
        double sq = 0;
        for (double g : store.grads()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm)
          for (double& g : store.grads()) g *= cfg.clip_norm / norm;
      }
      ad::adam_step(adam, store);
      loss_sum += value * static_cast<double>(n);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.val_loss = evaluate_loss(model, val);
    rec.val_auc = safe_auc(score_events(model, val));
    if (!std::isfinite(rec.val_loss))
      throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      best.assign(store.values().begin(), store.values().end());
      stale = 0;
    } else if (++stale >= cfg.patience && cfg.patience > 0) {
      result.stopped_early = true;
      result.last = make_checkpoint(model, epoch, &adam);
      break;
    }
    result.last = make_checkpoint(model, epoch, &adam);
  }
  if (result.log.empty()) result.last = make_checkpoint(model, first_epoch - 1, &adam);
  std::copy(best.begin(), best.end(), store.values().begin());
  return result;
}

}  // namespace btn
