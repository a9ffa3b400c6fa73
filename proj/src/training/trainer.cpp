#include <cstdio>
#include <fstream>
#include <numeric>

#include "blastoseg/parallel.hpp"
#include "blastoseg/training.hpp"

namespace blastoseg::training {

const char* to_string(StopReason reason) {
  return reason == StopReason::early_stop ? "early_stop" : "max_epochs";
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_jaccard,lr\n";
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss,
                  e.val_jaccard, e.lr);
    out += line;
  }
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << to_csv();
  if (!os) throw IoError("cannot write history '" + path.string() + "'");
}

Batch assemble_batch(std::span<const data::SamplePair> pairs, std::span<const std::size_t> indices,
                     int height, int width, std::optional<std::uint64_t> augment_seed,
                     const data::AugmentRanges& ranges) {
  const int n = static_cast<int>(indices.size());
  const numerics::Shape4 shape{n, 1, height, width};
  Batch b{Tensor<float>(shape), Tensor<float>(shape)};
  parallel_for(n, [&](int k) {
    const std::size_t idx = indices[static_cast<std::size_t>(k)];
    data::SamplePair pair = data::resize_pair(pairs[idx], width, height);
    if (augment_seed) pair = data::augment(pair, derive_seed(*augment_seed, idx), ranges);
    const data::Raster image = data::normalize(pair.image);
    std::copy(image.pixels.begin(), image.pixels.end(), b.images.sample(k));
    std::transform(pair.mask.bits.begin(), pair.mask.bits.end(), b.masks.sample(k),
                   [](std::uint8_t v) { return static_cast<float>(v); });
  });
  return b;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 engine(derive_seed(seed, hash_name("shuffle") + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = std::min(static_cast<std::size_t>(uniform01(engine) * static_cast<double>(i)), i - 1);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

EvalLoss evaluate_loss(const models::SegmentationModel<float>& model,
                       std::span<const data::SamplePair> pairs, int batch_size, double epsilon) {
  if (pairs.empty()) throw ConfigurationError("cannot evaluate an empty set");
  const auto& cfg = model.config();
  double loss_sum = 0.0;
  std::uint64_t inter = 0, uni = 0;
  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(pairs.size() - start, static_cast<std::size_t>(batch_size));
    const Batch b = assemble_batch(pairs, std::span(all).subspan(start, count), cfg.height, cfg.width,
                                   std::nullopt);
    const Tensor<float> pred = model.predict(b.images);
    loss_sum += bce_jaccard_loss(pred, b.masks, epsilon, false).loss * static_cast<double>(count);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] >= 0.5f, g = b.masks[i] > 0.5f;
      inter += p && g;
      uni += p || g;
    }
  }
  EvalLoss r;
  r.loss = loss_sum / static_cast<double>(pairs.size());
  r.jaccard = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return r;
}

TrainHistory train(models::SegmentationModel<float>& model, std::span<const data::SamplePair> train_set,
                   std::span<const data::SamplePair> val_set, const TrainConfig& config,
                   const TrainCallbacks& callbacks) {
  config.validate();
  if (train_set.empty()) throw ConfigurationError("training set is empty");
  if (val_set.empty()) throw ConfigurationError("validation set is empty");
  const auto& mc = model.config();

  Adam adam;
  PlateauScheduler scheduler(config.initial_lr, config.lr_factor, config.lr_patience, config.min_lr,
                             config.improvement_threshold);
  EarlyStopper stopper(config.early_stop_patience, config.improvement_threshold);
  TrainHistory history;
  std::vector<Tensor<float>> best_state;
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = scheduler.lr();
    const auto order = epoch_order(train_set.size(), config.seed, epoch);
    const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
      const std::size_t count = std::min(order.size() - start, bs);
      std::optional<std::uint64_t> aug;
      if (config.augment) aug = derive_seed(epoch_seed, hash_name("augment"));
      const Batch b = assemble_batch(train_set, std::span(order).subspan(start, count), mc.height,
                                     mc.width, aug, config.augment_ranges);
      model.zero_grad();
      const numerics::Pass pass{numerics::Mode::train,
                                derive_seed(epoch_seed, static_cast<std::uint64_t>(batch_index))};
      const Tensor<float> pred = model.forward(b.images, pass);
      auto loss = bce_jaccard_loss(pred, b.masks, config.loss_epsilon);
      if (!std::isfinite(loss.loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index),
                             epoch, batch_index, "loss");
      }
      model.backward(loss.grad);
      auto params = model.parameters();
      try {
        adam.step<float>(params, lr);
      } catch (const NumericalError& e) {
        throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index) + ", parameter '" + e.parameter() + "'",
                             epoch, batch_index, e.parameter());
      }
      loss_sum += loss.loss * static_cast<double>(count);
    }

    const EvalLoss val = evaluate_loss(model, val_set, config.batch_size, config.loss_epsilon);
    if (!std::isfinite(val.loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch), epoch, -1, "loss");
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train_set.size()), val.loss, val.jaccard, lr};
    history.epochs.push_back(rec);
    scheduler.observe(val.loss);
    if (stopper.observe(epoch, val.loss)) {
      best_state = model.snapshot();
      history.best_epoch = epoch;
      if (callbacks.on_best) callbacks.on_best(model, rec);
    }
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
    if (stopper.should_stop()) {
      history.stop_reason = StopReason::early_stop;
      break;
    }
  }
  if (!best_state.empty()) model.restore(best_state);
  return history;
}

}  // namespace blastoseg::training
