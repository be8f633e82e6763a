#include "invbasin/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace invbasin {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
  }
}

}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text) {
  ConfigMap map;
  map.source_ = text;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    }
    if (map.entries_.count(key)) {
      throw ConfigError("duplicate config key '" + key + "'");
    }
    Entry e;
    if (value.front() == '[') {
      if (value.back() != ']') {
        throw ConfigError("key '" + key + "': unterminated list");
      }
      e.is_list = true;
      std::string body = value.substr(1, value.size() - 2);
      std::string item;
      std::stringstream ss(body);
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) e.items.push_back(unquote(item));
      }
    } else {
      e.raw = unquote(value);
    }
    map.entries_[key] = std::move(e);
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

bool ConfigMap::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  if (it->second.is_list) {
    throw ConfigError("key '" + key + "': expected a scalar, got a list");
  }
  return to_double(it->second.raw, key);
}

std::int64_t ConfigMap::get_int(const std::string& key,
                                std::int64_t fallback) const {
  double v = get_double(key, static_cast<double>(fallback));
  if (std::floor(v) != v) {
    throw ConfigError("key '" + key + "': expected an integer");
  }
  return static_cast<std::int64_t>(v);
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  const std::string& raw = it->second.raw;
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + raw +
                    "'");
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  if (it->second.is_list) {
    throw ConfigError("key '" + key + "': expected a string, got a list");
  }
  return it->second.raw;
}

std::vector<double> ConfigMap::get_doubles(const std::string& key,
                                           std::vector<double> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  if (!it->second.is_list) {
    throw ConfigError("key '" + key + "': expected a list like [1, 2, 3]");
  }
  std::vector<double> out;
  out.reserve(it->second.items.size());
  for (const auto& s : it->second.items) out.push_back(to_double(s, key));
  return out;
}

void ConfigMap::check_unknown_keys() const {
  for (const auto& [key, entry] : entries_) {
    (void)entry;
    if (!consumed_.count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kDeterministic: return "deterministic";
    case TrainMode::kProbabilistic: return "probabilistic";
    case TrainMode::kUblPhase2: return "ubl_phase2";
  }
  return "deterministic";
}

TrainMode mode_from_name(const std::string& name) {
  if (name == "deterministic") return TrainMode::kDeterministic;
  if (name == "probabilistic") return TrainMode::kProbabilistic;
  if (name == "ubl_phase2") return TrainMode::kUblPhase2;
  throw ConfigError("unknown mode '" + name +
                    "' (deterministic | probabilistic | ubl_phase2)");
}

TrainConfig train_config_from(const ConfigMap& map) {
  TrainConfig c;
  c.mode = mode_from_name(map.get_string("mode", mode_name(c.mode)));
  c.placement = placement_from_name(
      map.get_string("placement", placement_name(c.placement)));
  c.weights.lambda_rec = map.get_double("lambda_rec", c.weights.lambda_rec);
  c.weights.lambda_cont = map.get_double("lambda_cont", c.weights.lambda_cont);
  c.weights.lambda_inv = map.get_double("lambda_inv", c.weights.lambda_inv);
  c.weights.tau = map.get_double("tau", c.weights.tau);
  c.weights.t_scale = map.get_double("t_scale", c.weights.t_scale);

  auto get_size = [&](const char* key, std::size_t fallback) {
    std::int64_t v = map.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(std::string("key '") + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
  };
  c.epochs = get_size("epochs", c.epochs);
  c.steps_per_epoch = get_size("steps_per_epoch", c.steps_per_epoch);
  c.batch_size = get_size("batch_size", c.batch_size);
  c.adam.lr = map.get_double("learning_rate", c.adam.lr);
  c.adam.beta1 = map.get_double("adam_beta1", c.adam.beta1);
  c.adam.beta2 = map.get_double("adam_beta2", c.adam.beta2);
  c.adam.eps = map.get_double("adam_eps", c.adam.eps);
  c.clip_norm = map.get_double("clip_norm", c.clip_norm);
  c.patience = get_size("patience", c.patience);

  std::vector<double> seed_fallback(c.seeds.begin(), c.seeds.end());
  std::vector<double> seeds = map.get_doubles("seeds", seed_fallback);
  c.seeds.clear();
  for (double s : seeds) {
    if (s < 0 || std::floor(s) != s) {
      throw ConfigError("seeds must be non-negative integers");
    }
    c.seeds.push_back(static_cast<std::uint64_t>(s));
  }

  c.k_mc = get_size("k_mc", c.k_mc);
  c.window = get_size("window", c.window);
  c.train_window = get_size("train_window", c.train_window);
  c.hidden = get_size("hidden_size", c.hidden);
  c.embedding = get_size("embedding_size", c.embedding);
  c.static_hidden = get_size("static_hidden", c.static_hidden);
  c.prior_std = map.get_double("prior_std", c.prior_std);
  c.candidate_gate_sigmoid =
      map.get_bool("candidate_gate_sigmoid", c.candidate_gate_sigmoid);
  c.contrastive_verbatim =
      map.get_bool("contrastive_verbatim", c.contrastive_verbatim);

  c.noise_fraction = map.get_double("noise_fraction", c.noise_fraction);
  c.noise_std = map.get_double("noise_std", c.noise_std);

  c.t_candidates = map.get_doubles("t_candidates", c.t_candidates);
  c.ubl_epochs = get_size("ubl_epochs", c.ubl_epochs);
  c.tune_epochs = get_size("tune_epochs", c.tune_epochs);
  c.ubl_from_scratch = map.get_bool("ubl_from_scratch", c.ubl_from_scratch);

  c.val_batches = get_size("val_batches", c.val_batches);
  c.split_train = map.get_double("split_train", c.split_train);
  c.split_val = map.get_double("split_val", c.split_val);

  c.forward_hidden = get_size("forward_hidden", c.forward_hidden);
  c.forward_epochs = get_size("forward_epochs", c.forward_epochs);
  c.forward_window = get_size("forward_window", c.forward_window);
  c.forward_spinup = get_size("forward_spinup", c.forward_spinup);

  c.sweep_fractions = map.get_doubles("sweep_fractions", c.sweep_fractions);
  c.sweep_stds = map.get_doubles("sweep_stds", c.sweep_stds);

  map.check_unknown_keys();
  validate(c);
  return c;
}

void validate(const TrainConfig& c) {
  validate(c.weights);
  if (c.epochs == 0 || c.steps_per_epoch == 0 || c.batch_size < 2) {
    throw ConfigError("epochs and steps_per_epoch must be >= 1, batch_size >= 2");
  }
  if (c.adam.lr <= 0 || c.adam.beta1 < 0 || c.adam.beta1 >= 1 ||
      c.adam.beta2 < 0 || c.adam.beta2 >= 1 || c.adam.eps <= 0) {
    throw ConfigError("invalid Adam settings");
  }
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (c.k_mc < 2) throw ConfigError("k_mc must be >= 2");
  if (c.window == 0 || c.train_window == 0) {
    throw ConfigError("window sizes must be positive");
  }
  if (c.hidden == 0 || c.embedding == 0 || c.static_hidden == 0 ||
      c.forward_hidden == 0) {
    throw ConfigError("layer sizes must be positive");
  }
  if (c.prior_std <= 0) throw ConfigError("prior_std must be > 0");
  if (c.noise_fraction < 0 || c.noise_fraction > 1 || c.noise_std < 0) {
    throw ConfigError("noise_fraction in [0,1], noise_std >= 0");
  }
  if (c.t_candidates.empty()) throw ConfigError("t_candidates must be non-empty");
  for (double t : c.t_candidates) {
    if (t <= 0) throw ConfigError("t_candidates must be positive");
  }
  if (!(c.split_train > 0 && c.split_val > 0 &&
        c.split_train + c.split_val < 1.0)) {
    throw ConfigError("split_train and split_val must be positive with "
                      "split_train + split_val < 1");
  }
  if (c.val_batches == 0) throw ConfigError("val_batches must be >= 1");
}

std::string default_config_text() {
  return R"(# invbasin run configuration. Every key is optional; the values below are
# the built-in defaults.

# Inverse-model training mode: deterministic | probabilistic | ubl_phase2.
mode = "probabilistic"
# Which linear layer carries the weight distribution:
# deterministic | encoder | decoder | static_head1 | static_head2 | recon_head
placement = "encoder"

# Loss weights and temperatures.
lambda_rec = 1.0
lambda_cont = 1.0
lambda_inv = 1.0
tau = 0.1
t_scale = 1.0

# Optimization.
epochs = 50
steps_per_epoch = 25
batch_size = 16
learning_rate = 0.001
adam_beta1 = 0.9
adam_beta2 = 0.999
adam_eps = 1e-8
clip_norm = 5.0
patience = 10

# Seeds for ensemble experiments.
seeds = [0, 1, 2, 3, 4]

# Uncertainty evaluation: Monte-Carlo samples and window sizes (days).
k_mc = 30
window = 365
train_window = 365

# Architecture.
hidden_size = 64
embedding_size = 128
static_hidden = 64
prior_std = 1.0
candidate_gate_sigmoid = false
contrastive_verbatim = false

# Training-noise injection (robustness studies).
noise_fraction = 0.0
noise_std = 0.0

# Uncertainty-based learning (phase 2).
t_candidates = [0.5, 1, 2, 5, 10]
ubl_epochs = 10
tune_epochs = 2
ubl_from_scratch = false

# Validation and temporal split fractions.
val_batches = 4
split_train = 0.6
split_val = 0.15

# Forward streamflow model.
forward_hidden = 64
forward_epochs = 30
forward_window = 365
forward_spinup = 90

# Robustness sweep grid.
sweep_fractions = [0.01, 0.05, 0.2]
sweep_stds = [1, 5, 10]
)";
}

}  // namespace invbasin
