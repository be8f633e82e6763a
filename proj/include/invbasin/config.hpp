// Flat key = value configuration files and the typed run configuration.
// Every key has a default; configs/default.toml documents the full set.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "invbasin/data.hpp"
#include "invbasin/nn.hpp"
#include "invbasin/objectives.hpp"

namespace invbasin {

class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_text(const std::string& text);

  bool has(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  std::vector<double> fallback) const;

  // Errors on keys that were never read by any getter (typo guard).
  void check_unknown_keys() const;

  const std::string& source_text() const { return source_; }

 private:
  struct Entry {
    std::string raw;
    bool is_list = false;
    std::vector<std::string> items;
  };
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> consumed_;
  std::string source_;
};

enum class TrainMode { kDeterministic, kProbabilistic, kUblPhase2 };

std::string mode_name(TrainMode m);
TrainMode mode_from_name(const std::string& name);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kProbabilistic;
  ProbPlacement placement = ProbPlacement::kEncoder;
  LossWeights weights;

  std::size_t epochs = 50;
  std::size_t steps_per_epoch = 25;
  std::size_t batch_size = 16;
  AdamConfig adam;
  double clip_norm = 5.0;
  std::size_t patience = 10;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  std::size_t k_mc = 30;
  std::size_t window = 365;        // evaluation window W
  std::size_t train_window = 365;  // training window L

  std::size_t hidden = 64;
  std::size_t embedding = 128;
  std::size_t static_hidden = 64;
  double prior_std = 1.0;
  bool candidate_gate_sigmoid = false;
  bool contrastive_verbatim = false;

  double noise_fraction = 0.0;
  double noise_std = 0.0;

  std::vector<double> t_candidates = {0.5, 1.0, 2.0, 5.0, 10.0};
  std::size_t ubl_epochs = 10;
  std::size_t tune_epochs = 2;
  bool ubl_from_scratch = false;

  std::size_t val_batches = 4;
  double split_train = 0.60;
  double split_val = 0.15;

  std::size_t forward_hidden = 64;
  std::size_t forward_epochs = 30;
  std::size_t forward_window = 365;
  std::size_t forward_spinup = 90;

  std::vector<double> sweep_fractions = {0.01, 0.05, 0.2};
  std::vector<double> sweep_stds = {1.0, 5.0, 10.0};
};

TrainConfig train_config_from(const ConfigMap& map);
void validate(const TrainConfig& cfg);

// The documented example configuration, key per line.
std::string default_config_text();

}  // namespace invbasin
