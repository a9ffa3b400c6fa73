#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "blastoseg/cli.hpp"

namespace blastoseg::cli {
namespace {

namespace fs = std::filesystem;
using Model = models::SegmentationModel<float>;

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw IoError("cannot write '" + path.string() + "'");
}

std::string frame_tag(const data::SamplePair& p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", p.frame_index);
  return p.source_id + "_" + buf;
}

std::optional<models::Architecture> architecture_of(ModelChoice c) {
  switch (c) {
    case ModelChoice::unet: return models::Architecture::unet;
    case ModelChoice::sd_unet: return models::Architecture::sd_unet;
    case ModelChoice::resunet: return models::Architecture::resunet;
    case ModelChoice::rd_unet: return models::Architecture::rd_unet;
    default: return std::nullopt;
  }
}

/// Checkpoints, their models and the split they were trained on.
struct Loaded {
  std::vector<numerics::Checkpoint> checkpoints;
  std::vector<Model> models;
  SplitSettings split;
  ModelChoice choice = ModelChoice::automatic;
  int height = 0;
  int width = 0;
};

Loaded load_models(const EvalOptions& o) {
  if (o.checkpoints.empty()) throw ConfigurationError("at least one checkpoint is required");
  Loaded l;
  l.choice = o.model;
  if (l.choice == ModelChoice::automatic) {
    l.choice = o.checkpoints.size() == 1 ? ModelChoice::automatic : ModelChoice::ensemble_unweighted;
  }
  const auto arch = architecture_of(l.choice);
  if (arch && o.checkpoints.size() != 1) {
    throw ConfigurationError("a single-model evaluation takes exactly one checkpoint");
  }
  l.models.reserve(o.checkpoints.size());
  for (const auto& path : o.checkpoints) {
    auto ck = numerics::read_checkpoint(path);
    if (arch) {
      const auto held = ck.meta("model").value_or("?");
      if (held != models::to_string(*arch)) {
        throw CheckpointError("checkpoint '" + path.string() + "' holds '" + held + "', requested '" +
                              std::string(models::to_string(*arch)) + "'");
      }
    }
    l.models.push_back(Model::from_checkpoint(ck));
    const auto split = SplitSettings::from_meta(ck);
    const auto& cfg = l.models.back().config();
    if (l.checkpoints.empty()) {
      l.split = split;
      l.height = cfg.height;
      l.width = cfg.width;
    } else if (!(split == l.split)) {
      throw CheckpointError("checkpoint '" + path.string() + "' was trained on a different split");
    } else if (cfg.height != l.height || cfg.width != l.width) {
      throw CheckpointError("checkpoint '" + path.string() + "' has a different input size");
    }
    l.checkpoints.push_back(std::move(ck));
  }
  return l;
}

models::EnsembleSpec<float> make_ensemble(const Loaded& l) {
  std::vector<const Model*> members;
  for (const auto& m : l.models) members.push_back(&m);
  if (l.choice == ModelChoice::ensemble_weighted) {
    std::vector<double> jaccards;
    for (const auto& ck : l.checkpoints) {
      const auto v = ck.meta("val_jaccard");
      if (!v) throw CheckpointError("weighted ensembles need checkpoints with a val_jaccard entry");
      jaccards.push_back(std::stod(*v));
    }
    return models::make_weighted_ensemble<float>(members, jaccards);
  }
  return models::make_unweighted_ensemble<float>(members);
}

void log_report(std::ostream& log, const std::string& label, const evaluation::TestsetReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s: micro jaccard %.4f dice %.4f accuracy %.4f (%zu images, threshold %.2f)\n",
                label.c_str(), r.micro.jaccard.value_or(0.0), r.micro.dice.value_or(0.0),
                r.micro.accuracy.value_or(0.0), r.images.size(), r.threshold);
  log << buf;
}

}  // namespace

void cmd_generate(const GenerateOptions& o, std::ostream& log) {
  o.spec.validate();
  if (o.out.empty()) throw ConfigurationError("an output directory is required");
  const auto pairs = data::generate_phantom_dataset(o.spec);
  data::write_dataset(o.out, pairs);
  write_key_values(o.out / "phantom_spec.txt", to_key_values(o.spec));
  log << "generated " << pairs.size() << " pairs in " << o.out.string() << '\n';
}

training::TrainHistory cmd_train(const TrainOptions& o, std::ostream& log) {
  o.train.validate();
  o.split.validate();
  if (o.out.empty()) throw ConfigurationError("an output directory is required");
  const auto pairs = data::read_dataset(o.data);
  const auto splits = make_splits(pairs, o.split);
  if (splits.train.empty() || splits.val.empty()) {
    throw ConfigurationError("split leaves no training or validation data");
  }

  models::ModelConfig mc;
  mc.architecture = o.architecture;
  mc.base_filters = o.base_filters;
  mc.height = mc.width = o.size;
  mc.dropout_rate = o.train.dropout_rate;
  mc.seed = o.train.seed;
  Model model(mc);

  fs::create_directories(o.out);
  write_key_values(o.out / "config.txt", o.to_key_values());
  write_text(o.out / "split.csv", splits.to_csv(pairs));
  write_text(o.out / "best.arch.txt", model.describe_text());

  training::TrainCallbacks cb;
  cb.on_best = [&](const Model& m, const training::EpochRecord& rec) {
    auto ck = m.to_checkpoint();
    o.split.to_meta(ck);
    ck.set_meta("epoch", std::to_string(rec.epoch));
    ck.set_meta("val_loss", num(rec.val_loss));
    ck.set_meta("val_jaccard", num(rec.val_jaccard));
    numerics::write_checkpoint(o.out / "best.ckpt", ck);
  };
  cb.on_epoch = [&](const training::EpochRecord& rec) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d train_loss %.5f val_loss %.5f val_jaccard %.4f lr %.3g\n",
                  rec.epoch, rec.train_loss, rec.val_loss, rec.val_jaccard, rec.lr);
    log << buf << std::flush;
  };
  const auto history = training::train(model, splits.train, splits.val, o.train, cb);
  history.write_csv(o.out / "history.csv");

  const auto& best = history.epochs.at(static_cast<std::size_t>(history.best_epoch - 1));
  write_key_values(o.out / "summary.txt",
                   {{"stop_reason", training::to_string(history.stop_reason)},
                    {"epochs_run", std::to_string(history.epochs.size())},
                    {"best_epoch", std::to_string(history.best_epoch)},
                    {"best_val_loss", num(best.val_loss)},
                    {"best_val_jaccard", num(best.val_jaccard)},
                    {"train_pairs", std::to_string(splits.train.size())},
                    {"val_pairs", std::to_string(splits.val.size())},
                    {"test_pairs", std::to_string(splits.test.size())}});
  log << "stopped (" << training::to_string(history.stop_reason) << ") after "
      << history.epochs.size() << " epochs; best epoch " << history.best_epoch << '\n';
  return history;
}

evaluation::TestsetReport cmd_eval(const EvalOptions& o, std::ostream& log) {
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw ConfigurationError("threshold must lie in (0, 1)");
  if (o.out.empty()) throw ConfigurationError("an output directory is required");
  const Loaded l = load_models(o);
  const auto pairs = data::read_dataset(o.data);
  const auto splits = make_splits(pairs, l.split);
  if (splits.test.empty()) throw ConfigurationError("test set is empty");
  fs::create_directories(o.out);

  const bool ensemble = !architecture_of(l.choice) && l.choice != ModelChoice::automatic;
  models::EnsembleSpec<float> spec;
  evaluation::Predictor predict;
  if (ensemble) {
    spec = make_ensemble(l);
    predict = evaluation::ensemble_predictor(spec);
    for (std::size_t k = 0; k < l.models.size(); ++k) {
      const auto member = evaluation::evaluate_testset(evaluation::model_predictor(l.models[k]),
                                                       splits.test, o.threshold, l.height, l.width,
                                                       o.batch_size);
      member.write_csv(o.out / ("member_" + std::to_string(k + 1) + "_report.csv"));
      log_report(log, "member " + std::to_string(k + 1), member);
    }
  } else {
    predict = evaluation::model_predictor(l.models.front());
  }

  const auto probs = evaluation::predict_probabilities(predict, splits.test, l.height, l.width, o.batch_size);
  const auto report = evaluation::evaluate_probabilities(probs, splits.test, o.threshold);
  report.write_csv(o.out / "report.csv");
  log_report(log, ensemble ? "ensemble" : "model", report);

  if (o.overlays) {
    for (std::size_t i = 0; i < splits.test.size(); ++i) {
      const auto& p = splits.test[i];
      const auto pred = evaluation::binarize(probs[i], o.threshold);
      data::write_png_rgb(o.out / "overlays" / (frame_tag(p) + ".png"),
                          evaluation::render_overlay(p.image, p.mask, pred));
    }
  }
  if (o.sweep) {
    const auto grid = evaluation::default_threshold_grid();
    const auto sweep = evaluation::threshold_sweep(predict, splits.val, l.height, l.width, grid);
    write_text(o.out / "sweep.csv", sweep.to_csv());
  }
  return report;
}

evaluation::SweepResult cmd_sweep(const EvalOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigurationError("an output directory is required");
  const Loaded l = load_models(o);
  const auto pairs = data::read_dataset(o.data);
  const auto splits = make_splits(pairs, l.split);
  if (splits.val.empty()) throw ConfigurationError("validation set is empty");
  const bool ensemble = !architecture_of(l.choice) && l.choice != ModelChoice::automatic;
  models::EnsembleSpec<float> spec;
  evaluation::Predictor predict;
  if (ensemble) {
    spec = make_ensemble(l);
    predict = evaluation::ensemble_predictor(spec);
  } else {
    predict = evaluation::model_predictor(l.models.front());
  }
  const auto grid = evaluation::default_threshold_grid();
  const auto sweep = evaluation::threshold_sweep(predict, splits.val, l.height, l.width, grid);
  fs::create_directories(o.out);
  write_text(o.out / "sweep.csv", sweep.to_csv());
  for (const auto& row : sweep.rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "threshold %.1f micro_jaccard %.4f\n", row.threshold,
                  row.micro_jaccard.value_or(0.0));
    log << buf;
  }
  log << "best threshold " << sweep.best_threshold << "; insensitive over [0.4, 0.6]: "
      << (sweep.insensitive ? "yes" : "no") << '\n';
  return sweep;
}

void cmd_segment(const SegmentOptions& o, std::ostream& log) {
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw ConfigurationError("threshold must lie in (0, 1)");
  if (o.out.empty()) throw ConfigurationError("an output path is required");
  const Model model = Model::from_checkpoint(numerics::read_checkpoint(o.checkpoint));
  data::SamplePair pair;
  pair.image = data::read_png_gray(o.image);
  pair.mask = data::BinaryMask(pair.image.width, pair.image.height);
  const std::vector<data::SamplePair> one{pair};
  const auto& cfg = model.config();
  const auto probs =
      evaluation::predict_probabilities(evaluation::model_predictor(model), one, cfg.height, cfg.width, 1);
  const auto mask = evaluation::binarize(probs.front(), o.threshold);
  data::write_png_mask(o.out, mask);
  log << "wrote " << o.out.string() << " (" << mask.count() << " foreground pixels)\n";
  if (o.overlay_truth) {
    const auto truth = data::read_png_mask(*o.overlay_truth);
    fs::path overlay = o.out;
    overlay.replace_filename(o.out.stem().string() + "_overlay.png");
    data::write_png_rgb(overlay, evaluation::render_overlay(pair.image, truth, mask));
    log << "wrote " << overlay.string() << '\n';
  }
}

}  // namespace blastoseg::cli
