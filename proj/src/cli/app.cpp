#include <CLI11.hpp>

#include <ostream>

#include "blastoseg/cli.hpp"
#include "blastoseg/parallel.hpp"

namespace blastoseg::cli {
namespace {

std::string one_line(std::string s) {
  for (char& c : s) if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

const CLI::Validator kArchitecture(
    [](std::string& v) {
      try {
        models::parse_architecture(v);
      } catch (const ConfigurationError&) {
        return "unknown model '" + v + "' (expected unet, sd-unet, resunet, rd-unet)";
      }
      return std::string();
    },
    "MODEL");

const CLI::Validator kModelChoice(
    [](std::string& v) {
      try {
        parse_model_choice(v);
      } catch (const ConfigurationError&) {
        return "unknown model '" + v +
               "' (expected unet, sd-unet, resunet, rd-unet, ensemble-unweighted, ensemble-weighted)";
      }
      return std::string();
    },
    "MODEL");

const CLI::Range kThreshold(0.0, 1.0);

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blastocyst segmentation toolkit", "blastoseg"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: $BLASTOSEG_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  // generate
  auto* gen = app.add_subcommand("generate", "Render a synthetic phantom dataset");
  std::string gen_spec, gen_out;
  data::PhantomDatasetSpec gen_defaults;
  int gen_size = 0, gen_blastocysts = 0, gen_frames = 0, gen_debris = -1;
  double gen_noise = -1.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--spec", gen_spec, "Phantom spec file (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--size", gen_size, "Image size in pixels")->check(CLI::PositiveNumber);
  gen->add_option("--blastocysts", gen_blastocysts, "Number of blastocysts")->check(CLI::PositiveNumber);
  gen->add_option("--frames", gen_frames, "Frames per blastocyst")->check(CLI::PositiveNumber);
  gen->add_option("--noise", gen_noise, "Gaussian noise sigma (gray levels)")->check(CLI::NonNegativeNumber);
  gen->add_option("--debris", gen_debris, "Debris blobs per blastocyst")->check(CLI::NonNegativeNumber);

  // train
  auto* tr = app.add_subcommand("train", "Train one segmentation model");
  std::string tr_data, tr_out, tr_config, tr_model;
  std::uint64_t tr_seed = 0, tr_split_seed = 0;
  int tr_filters = 0, tr_size = 0, tr_epochs = 0, tr_batch = 0, tr_subset = -1;
  double tr_lr = 0.0, tr_split = 0.0, tr_val = 0.0;
  bool tr_grouped = false, tr_no_aug = false;
  tr->add_option("--data", tr_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--config", tr_config, "Training config file (key = value)")->check(CLI::ExistingFile);
  tr->add_option("--model", tr_model, "unet, sd-unet, resunet or rd-unet")->check(kArchitecture);
  tr->add_option("--seed", tr_seed, "Seed for initialisation, shuffling, augmentation and split");
  tr->add_option("--split-seed", tr_split_seed, "Seed for the data split only (default: --seed)");
  tr->add_option("--base-filters", tr_filters, "Filters of the first encoder block")->check(CLI::PositiveNumber);
  tr->add_option("--size", tr_size, "Working resolution (multiple of 16)")->check(CLI::PositiveNumber);
  tr->add_option("--max-epochs", tr_epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", tr_batch, "Minibatch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", tr_lr, "Initial learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--subset", tr_subset, "Use a seeded subset of this many pairs")->check(CLI::NonNegativeNumber);
  tr->add_option("--split-ratio", tr_split, "Train+validation fraction")->check(kThreshold);
  tr->add_option("--val-ratio", tr_val, "Validation fraction of the training part")->check(kThreshold);
  tr->add_flag("--grouped-split", tr_grouped, "Keep all frames of a blastocyst in one split");
  tr->add_flag("--no-augment", tr_no_aug, "Disable on-the-fly augmentation");

  // eval / sweep share their options
  EvalOptions ev;
  std::string ev_data, ev_out, ev_model;
  std::vector<std::string> ev_ckpts;
  bool ev_no_overlays = false;
  auto* evc = app.add_subcommand("eval", "Evaluate checkpoints on the frozen test split");
  evc->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evc->add_option("--checkpoint,checkpoints", ev_ckpts, "Checkpoint file(s)")->required()->check(CLI::ExistingFile);
  evc->add_option("--model", ev_model, "Model or ensemble-unweighted / ensemble-weighted")->check(kModelChoice);
  evc->add_option("--threshold", ev.threshold, "Binarisation threshold")->check(kThreshold);
  evc->add_option("--out", ev_out, "Output directory")->required();
  evc->add_flag("--sweep", ev.sweep, "Also run the threshold sweep on the validation split");
  evc->add_flag("--no-overlays", ev_no_overlays, "Skip overlay PNGs");

  auto* sw = app.add_subcommand("sweep", "Threshold sweep 0.1..0.9 on the validation split");
  sw->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sw->add_option("--checkpoint,checkpoints", ev_ckpts, "Checkpoint file(s)")->required()->check(CLI::ExistingFile);
  sw->add_option("--model", ev_model, "Model or ensemble-unweighted / ensemble-weighted")->check(kModelChoice);
  sw->add_option("--out", ev_out, "Output directory")->required();

  // segment
  SegmentOptions sg;
  std::string sg_ckpt, sg_image, sg_out, sg_truth;
  auto* seg = app.add_subcommand("segment", "Segment a single image into a mask PNG");
  seg->add_option("--checkpoint", sg_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  seg->add_option("--image", sg_image, "Grayscale PNG")->required()->check(CLI::ExistingFile);
  seg->add_option("--out", sg_out, "Output mask PNG")->required();
  seg->add_option("--threshold", sg.threshold, "Binarisation threshold")->check(kThreshold);
  seg->add_option("--truth", sg_truth, "Ground-truth mask; also writes <out>_overlay.png")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (*gen) {
      GenerateOptions o;
      if (!gen_spec.empty()) apply_key_values(o.spec, read_key_values(gen_spec));
      if (gen->count("--seed")) o.spec.seed = gen_seed;
      if (gen_size) o.spec.image_size = gen_size;
      if (gen_blastocysts) o.spec.blastocysts = gen_blastocysts;
      if (gen_frames) o.spec.frames = gen_frames;
      if (gen_noise >= 0.0) o.spec.noise_level = gen_noise;
      if (gen_debris >= 0) o.spec.debris_count = gen_debris;
      o.out = gen_out;
      cmd_generate(o, out);
    } else if (*tr) {
      TrainOptions o;
      if (!tr_config.empty()) o.apply(read_key_values(tr_config));
      KeyValues flags;
      if (!tr_model.empty()) flags.emplace_back("model", tr_model);
      if (tr->count("--seed")) flags.emplace_back("seed", std::to_string(tr_seed));
      if (tr->count("--split-seed")) flags.emplace_back("split_seed", std::to_string(tr_split_seed));
      o.apply(flags);
      if (tr_filters) o.base_filters = tr_filters;
      if (tr_size) o.size = tr_size;
      if (tr_epochs) o.train.max_epochs = tr_epochs;
      if (tr_batch) o.train.batch_size = tr_batch;
      if (tr_lr > 0.0) o.train.initial_lr = tr_lr;
      if (tr_subset >= 0) o.split.subset = tr_subset;
      if (tr_split > 0.0) o.split.split_ratio = tr_split;
      if (tr_val > 0.0) o.split.val_ratio = tr_val;
      if (tr_grouped) o.split.grouped = true;
      if (tr_no_aug) o.train.augment = false;
      o.data = tr_data;
      o.out = tr_out;
      cmd_train(o, out);
    } else if (*evc || *sw) {
      ev.data = ev_data;
      ev.out = ev_out;
      ev.overlays = !ev_no_overlays;
      for (const auto& c : ev_ckpts) ev.checkpoints.emplace_back(c);
      if (!ev_model.empty()) ev.model = parse_model_choice(ev_model);
      if (*evc) cmd_eval(ev, out);
      else cmd_sweep(ev, out);
    } else if (*seg) {
      sg.checkpoint = sg_ckpt;
      sg.image = sg_image;
      sg.out = sg_out;
      if (!sg_truth.empty()) sg.overlay_truth = sg_truth;
      cmd_segment(sg, out);
    }
  } catch (const CheckpointError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitCheckpoint;
  } catch (const NumericalError& e) {
    err << "error: numerical: " << one_line(e.what()) << '\n';
    return kExitNumerical;
  } catch (const ConfigurationError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const UnsupportedConfiguration& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace blastoseg::cli
