#include <charconv>
#include <fstream>
#include <sstream>

#include "blastoseg/cli.hpp"

namespace blastoseg::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
    throw ConfigurationError("bad value '" + value + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigurationError("bad boolean '" + value + "' for key '" + key + "'");
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream is(text);
  std::string line;
  int row = 0;
  while (std::getline(is, line)) {
    ++row;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigurationError("line " + std::to_string(row) + " is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigurationError("empty key on line " + std::to_string(row));
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + '\n';
  return out;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << format_key_values(values);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
}

KeyValues to_key_values(const data::PhantomDatasetSpec& spec) {
  return {{"blastocysts", std::to_string(spec.blastocysts)},
          {"frames", std::to_string(spec.frames)},
          {"image_size", std::to_string(spec.image_size)},
          {"noise_level", num(spec.noise_level)},
          {"debris_count", std::to_string(spec.debris_count)},
          {"seed", std::to_string(spec.seed)}};
}

void apply_key_values(data::PhantomDatasetSpec& spec, const KeyValues& values) {
  for (const auto& [k, v] : values) {
    if (k == "blastocysts") spec.blastocysts = parse_number<int>(k, v);
    else if (k == "frames") spec.frames = parse_number<int>(k, v);
    else if (k == "image_size") spec.image_size = parse_number<int>(k, v);
    else if (k == "noise_level") spec.noise_level = parse_number<double>(k, v);
    else if (k == "debris_count") spec.debris_count = parse_number<int>(k, v);
    else if (k == "seed") spec.seed = parse_number<std::uint64_t>(k, v);
    else throw ConfigurationError("unknown phantom spec key '" + k + "'");
  }
}

KeyValues TrainOptions::to_key_values() const {
  const auto& t = train;
  return {{"model", std::string(models::to_string(architecture))},
          {"base_filters", std::to_string(base_filters)},
          {"size", std::to_string(size)},
          {"batch_size", std::to_string(t.batch_size)},
          {"max_epochs", std::to_string(t.max_epochs)},
          {"initial_lr", num(t.initial_lr)},
          {"lr_factor", num(t.lr_factor)},
          {"lr_patience", std::to_string(t.lr_patience)},
          {"min_lr", num(t.min_lr)},
          {"early_stop_patience", std::to_string(t.early_stop_patience)},
          {"dropout_rate", num(t.dropout_rate)},
          {"loss_epsilon", num(t.loss_epsilon)},
          {"improvement_threshold", num(t.improvement_threshold)},
          {"augment", t.augment ? "true" : "false"},
          {"seed", std::to_string(t.seed)},
          {"split_seed", std::to_string(split.seed)},
          {"subset", std::to_string(split.subset)},
          {"split_ratio", num(split.split_ratio)},
          {"val_ratio", num(split.val_ratio)},
          {"grouped_split", split.grouped ? "true" : "false"}};
}

void TrainOptions::apply(const KeyValues& values) {
  auto& t = train;
  for (const auto& [k, v] : values) {
    if (k == "model") architecture = models::parse_architecture(v);
    else if (k == "base_filters") base_filters = parse_number<int>(k, v);
    else if (k == "size") size = parse_number<int>(k, v);
    else if (k == "batch_size") t.batch_size = parse_number<int>(k, v);
    else if (k == "max_epochs") t.max_epochs = parse_number<int>(k, v);
    else if (k == "initial_lr") t.initial_lr = parse_number<double>(k, v);
    else if (k == "lr_factor") t.lr_factor = parse_number<double>(k, v);
    else if (k == "lr_patience") t.lr_patience = parse_number<int>(k, v);
    else if (k == "min_lr") t.min_lr = parse_number<double>(k, v);
    else if (k == "early_stop_patience") t.early_stop_patience = parse_number<int>(k, v);
    else if (k == "dropout_rate") t.dropout_rate = parse_number<double>(k, v);
    else if (k == "loss_epsilon") t.loss_epsilon = parse_number<double>(k, v);
    else if (k == "improvement_threshold") t.improvement_threshold = parse_number<double>(k, v);
    else if (k == "augment") t.augment = parse_bool(k, v);
    else if (k == "seed") t.seed = split.seed = parse_number<std::uint64_t>(k, v);
    else if (k == "split_seed") split.seed = parse_number<std::uint64_t>(k, v);
    else if (k == "subset") split.subset = parse_number<int>(k, v);
    else if (k == "split_ratio") split.split_ratio = parse_number<double>(k, v);
    else if (k == "val_ratio") split.val_ratio = parse_number<double>(k, v);
    else if (k == "grouped_split") split.grouped = parse_bool(k, v);
    else throw ConfigurationError("unknown training key '" + k + "'");
  }
}

ModelChoice parse_model_choice(const std::string& name) {
  std::string n = name;
  for (char& c : n) if (c == '_') c = '-';
  if (n == "unet") return ModelChoice::unet;
  if (n == "sd-unet") return ModelChoice::sd_unet;
  if (n == "resunet") return ModelChoice::resunet;
  if (n == "rd-unet") return ModelChoice::rd_unet;
  if (n == "ensemble-unweighted") return ModelChoice::ensemble_unweighted;
  if (n == "ensemble-weighted") return ModelChoice::ensemble_weighted;
  throw ConfigurationError("unknown model '" + name + "'");
}

}  // namespace blastoseg::cli
