#include "shiftlab/config.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "shiftlab/io_util.hpp"

namespace shiftlab {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : value) {
    if (c == ',') {
      parts.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  const std::string last = trim(current);
  if (!last.empty() || !parts.empty()) parts.push_back(last);
  return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw ConfigError("config key " + key + ": cannot parse '" + value +
                    "' as " + want);
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) bad_value(key, value, "an integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(key, value, "an integer");
  }
}

std::uint64_t to_uint64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) bad_value(key, value, "an unsigned integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(key, value, "an unsigned integer");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value, "a real number");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(key, value, "a real number");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& values, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += fmt(values[i]);
  }
  return out;
}

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value) {
  auto& d = cfg.dataset;
  auto& t = cfg.train;
  auto& a = cfg.al;
  if (key == "experiment") {
    cfg.experiment = value;
  } else if (key == "seeds") {
    cfg.seeds.clear();
    for (const auto& part : split_list(value)) {
      cfg.seeds.push_back(to_uint64(key, part));
    }
  } else if (key == "output.dir") {
    cfg.out_dir = value;
  } else if (key == "output.timing") {
    cfg.timing = to_bool(key, value);
  } else if (key == "dataset.kind") {
    if (value != "synthetic" && value != "folder") {
      bad_value(key, value, "synthetic|folder");
    }
    d.kind = value;
  } else if (key == "dataset.classes") {
    d.classes = to_int(key, value);
  } else if (key == "dataset.dim") {
    d.dim = to_int(key, value);
  } else if (key == "dataset.per_class") {
    d.per_class = to_int(key, value);
  } else if (key == "dataset.sigma") {
    d.sigma = to_double(key, value);
  } else if (key == "dataset.theta_deg") {
    d.theta_deg = to_double(key, value);
  } else if (key == "dataset.translate") {
    d.translate.clear();
    for (const auto& part : split_list(value)) {
      d.translate.push_back(to_double(key, part));
    }
  } else if (key == "dataset.seed") {
    d.seed = to_uint64(key, value);
  } else if (key == "dataset.path") {
    d.path = value;
  } else if (key == "dataset.image_size") {
    d.image_size = to_int(key, value);
  } else if (key == "dataset.features") {
    if (value != "flatten" && value != "meanpool") {
      bad_value(key, value, "flatten|meanpool");
    }
    d.features = value;
  } else if (key == "dataset.augment") {
    d.augment = to_bool(key, value);
  } else if (key == "train.mode") {
    t.mode = train_mode_from_string(value);
  } else if (key == "train.norm") {
    t.norm = norm_kind_from_string(value);
  } else if (key == "train.lr") {
    t.lr = to_double(key, value);
  } else if (key == "train.l2") {
    t.l2 = to_double(key, value);
  } else if (key == "train.momentum") {
    t.momentum = to_double(key, value);
  } else if (key == "train.batch_size") {
    t.batch_size = to_int(key, value);
  } else if (key == "train.epochs") {
    t.epochs = to_int(key, value);
  } else if (key == "train.runs") {
    t.runs = to_int(key, value);
  } else if (key == "train.seed") {
    t.seed = to_uint64(key, value);
  } else if (key == "train.conf_weight") {
    t.conf_weight = to_double(key, value);
  } else if (key == "train.hidden") {
    t.hidden.clear();
    for (const auto& part : split_list(value)) {
      t.hidden.push_back(to_int(key, part));
    }
  } else if (key == "train.gd_hidden") {
    t.gd_hidden.clear();
    for (const auto& part : split_list(value)) {
      t.gd_hidden.push_back(to_int(key, part));
    }
  } else if (key == "train.groups") {
    t.groups = to_int(key, value);
  } else if (key == "train.source_fraction") {
    t.source_fraction = to_double(key, value);
  } else if (key == "al.strategies") {
    a.strategies.clear();
    for (const auto& part : split_list(value)) {
      a.strategies.push_back(strategy_from_string(part));
    }
  } else if (key == "al.k") {
    a.k = to_int(key, value);
  } else if (key == "al.rounds") {
    a.rounds = to_int(key, value);
  } else if (key == "al.lambda") {
    a.lambda = to_double(key, value);
  } else if (key == "al.emoc_lr") {
    a.emoc_lr = to_double(key, value);
  } else if (key == "al.emoc_eval") {
    a.emoc_eval = to_int(key, value);
  } else if (key == "al.certainty_invert") {
    a.certainty_invert = to_bool(key, value);
  } else if (key == "grid.lrs") {
    cfg.grid.lrs.clear();
    for (const auto& part : split_list(value)) {
      cfg.grid.lrs.push_back(to_double(key, part));
    }
  } else if (key == "grid.l2s") {
    cfg.grid.l2s.clear();
    for (const auto& part : split_list(value)) {
      cfg.grid.l2s.push_back(to_double(key, part));
    }
  } else if (key == "significance.input") {
    cfg.significance_input = value;
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  return parse_config_text(read_file(path));
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "experiment = " << cfg.experiment << "\n";
  out << "seeds = "
      << join(cfg.seeds, [](std::uint64_t s) { return std::to_string(s); })
      << "\n";
  out << "output.dir = " << cfg.out_dir << "\n";
  out << "output.timing = " << (cfg.timing ? "true" : "false") << "\n";
  const auto& d = cfg.dataset;
  out << "dataset.kind = " << d.kind << "\n";
  out << "dataset.classes = " << d.classes << "\n";
  out << "dataset.dim = " << d.dim << "\n";
  out << "dataset.per_class = " << d.per_class << "\n";
  out << "dataset.sigma = " << fmt_double(d.sigma) << "\n";
  out << "dataset.theta_deg = " << fmt_double(d.theta_deg) << "\n";
  out << "dataset.translate = " << join(d.translate, fmt_double) << "\n";
  out << "dataset.seed = " << d.seed << "\n";
  out << "dataset.path = " << d.path << "\n";
  out << "dataset.image_size = " << d.image_size << "\n";
  out << "dataset.features = " << d.features << "\n";
  out << "dataset.augment = " << (d.augment ? "true" : "false") << "\n";
  const auto& t = cfg.train;
  out << "train.mode = " << to_string(t.mode) << "\n";
  out << "train.norm = " << to_string(t.norm) << "\n";
  out << "train.lr = " << fmt_double(t.lr) << "\n";
  out << "train.l2 = " << fmt_double(t.l2) << "\n";
  out << "train.momentum = " << fmt_double(t.momentum) << "\n";
  out << "train.batch_size = " << t.batch_size << "\n";
  out << "train.epochs = " << t.epochs << "\n";
  out << "train.runs = " << t.runs << "\n";
  out << "train.seed = " << t.seed << "\n";
  out << "train.conf_weight = " << fmt_double(t.conf_weight) << "\n";
  out << "train.hidden = "
      << join(t.hidden, [](int h) { return std::to_string(h); }) << "\n";
  out << "train.gd_hidden = "
      << join(t.gd_hidden, [](int h) { return std::to_string(h); }) << "\n";
  out << "train.groups = " << t.groups << "\n";
  out << "train.source_fraction = " << fmt_double(t.source_fraction) << "\n";
  const auto& a = cfg.al;
  out << "al.strategies = "
      << join(a.strategies, [](StrategyKind s) { return to_string(s); })
      << "\n";
  out << "al.k = " << a.k << "\n";
  out << "al.rounds = " << a.rounds << "\n";
  out << "al.lambda = " << fmt_double(a.lambda) << "\n";
  out << "al.emoc_lr = " << fmt_double(a.emoc_lr) << "\n";
  out << "al.emoc_eval = " << a.emoc_eval << "\n";
  out << "al.certainty_invert = " << (a.certainty_invert ? "true" : "false")
      << "\n";
  out << "grid.lrs = " << join(cfg.grid.lrs, fmt_double) << "\n";
  out << "grid.l2s = " << join(cfg.grid.l2s, fmt_double) << "\n";
  out << "significance.input = " << cfg.significance_input << "\n";
  return out.str();
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto& t = cfg.train;
  const auto& a = cfg.al;
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };

  if (d.kind == "synthetic") {
    if (d.classes < 2) fail("dataset.classes must be >= 2");
    if (d.dim < 2) fail("dataset.dim must be >= 2");
    if (d.per_class < 5) fail("dataset.per_class must be >= 5");
    if (d.sigma <= 0.0) fail("dataset.sigma must be positive");
    if (!d.translate.empty() &&
        static_cast<int>(d.translate.size()) != d.dim) {
      fail("dataset.translate must have dataset.dim entries");
    }
  } else if (d.image_size < 2) {
    fail("dataset.image_size must be >= 2");
  }

  if (t.lr <= 0.0) fail("train.lr must be positive");
  if (t.l2 < 0.0) fail("train.l2 must be nonnegative");
  if (t.momentum < 0.0 || t.momentum >= 1.0) {
    fail("train.momentum must lie in [0, 1)");
  }
  if (t.epochs < 0) fail("train.epochs must be nonnegative");
  if (t.runs < 1) fail("train.runs must be >= 1");
  if (t.conf_weight < 0.0) fail("train.conf_weight must be nonnegative");
  if (t.batch_size < 2) fail("train.batch_size must be >= 2");
  for (int h : t.hidden) {
    if (h < 1) fail("train.hidden widths must be positive");
  }
  for (int h : t.gd_hidden) {
    if (h < 1) fail("train.gd_hidden widths must be positive");
  }
  if (t.groups < 1) fail("train.groups must be >= 1");

  const bool adversarial =
      t.mode == TrainMode::Uada || t.mode == TrainMode::UadaSemi;
  if (adversarial) {
    if (t.batch_size < 4) {
      fail("train.batch_size must be >= 4 for UADA modes (two per domain)");
    }
    if (t.source_fraction <= 0.0 || t.source_fraction >= 1.0) {
      fail("train.source_fraction must lie strictly inside (0, 1) for UADA modes");
    }
    const int src = static_cast<int>(t.batch_size * t.source_fraction);
    if (src < 2 || t.batch_size - src < 2) {
      fail("train.batch_size/train.source_fraction leave fewer than 2 rows in a domain");
    }
  } else if (t.norm == NormKind::TransNorm) {
    fail("train.norm = trans requires a two-domain mode (uada or uada_semi)");
  }
  if (t.norm == NormKind::GroupNormWS) {
    for (int h : t.hidden) {
      if (h % t.groups != 0) {
        fail("train.groups = " + std::to_string(t.groups) +
             " does not divide hidden width " + std::to_string(h));
      }
    }
  }

  if (a.strategies.empty()) fail("al.strategies must not be empty");
  if (a.k < 1) fail("al.k must be >= 1");
  if (a.rounds < 0) fail("al.rounds must be nonnegative");
  if (a.lambda < 0.0 || a.lambda > 1.0) fail("al.lambda must lie in [0, 1]");
  if (a.emoc_lr < 0.0) fail("al.emoc_lr must be nonnegative");
  if (a.emoc_eval < 1) fail("al.emoc_eval must be >= 1");

  if (cfg.grid.lrs.empty()) fail("grid.lrs must not be empty");
  if (cfg.grid.l2s.empty()) fail("grid.l2s must not be empty");
  for (double lr : cfg.grid.lrs) {
    if (lr <= 0.0) fail("grid.lrs entries must be positive");
  }
  for (double l2 : cfg.grid.l2s) {
    if (l2 < 0.0) fail("grid.l2s entries must be nonnegative");
  }
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.seeds.size(); ++j) {
      if (cfg.seeds[i] == cfg.seeds[j]) fail("seeds contains duplicates");
    }
  }
}

bool config_text_has_key(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (trim(line.substr(0, eq)) == key) return true;
  }
  return false;
}

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& cfg) {
  if (!cfg.seeds.empty()) return cfg.seeds;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.train.runs; ++i) {
    seeds.push_back(cfg.train.seed + static_cast<std::uint64_t>(i));
  }
  return seeds;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == "synthetic") {
    ShiftSpec spec;
    spec.num_classes = d.classes;
    spec.dim = d.dim;
    spec.per_class = d.per_class;
    spec.sigma = d.sigma;
    spec.rotation = d.theta_deg * std::numbers::pi / 180.0;
    spec.seed = d.seed;
    if (!d.translate.empty()) {
      spec.translation = Vector(d.dim);
      for (int i = 0; i < d.dim; ++i) spec.translation(i) = d.translate[i];
    }
    return gen_shifted_gaussians(spec);
  }
  if (d.path.empty()) {
    throw ConfigError("dataset.path is required for dataset.kind = folder");
  }
  FolderOptions opts;
  opts.image_size = d.image_size;
  opts.meanpool = d.features == "meanpool";
  opts.augment = d.augment;
  opts.seed = d.seed;
  opts.split_seed = d.seed;
  return load_image_folder(d.path, opts);
}

}  // namespace shiftlab
