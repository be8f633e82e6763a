// Training orchestration: Adam, the inverse-model loop (deterministic,
// probabilistic, UBL phase 2), forward streamflow training on observed or
// reconstructed statics, and the robustness sweep.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "invbasin/config.hpp"
#include "invbasin/data.hpp"
#include "invbasin/evaluate.hpp"
#include "invbasin/nn.hpp"
#include "invbasin/objectives.hpp"
#include "invbasin/ubl.hpp"

namespace invbasin {

class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  void step(const std::vector<std::pair<std::string, Tensor*>>& params,
            const std::map<std::string, Tensor>& grads);

 private:
  AdamConfig cfg_;
  std::map<std::string, std::pair<Tensor, Tensor>> state_;  // m, v
  std::size_t t_ = 0;
};

// Scales all gradients so their joint L2 norm is at most `cap`; returns the
// pre-clip norm.
double clip_global_norm(std::map<std::string, Tensor>& grads, double cap);

struct EpochStats {
  double train_total = 0, train_rec = 0, train_cont = 0, train_inv = 0;
  double train_pen_inv = 0;  // equals train_inv outside the penalty phase
  double train_kl = 0;
  double val_total = 0, val_rec = 0, val_cont = 0, val_inv = 0, val_kl = 0;
  double wall_s = 0;
  bool best = false;
};

struct RunHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  bool diverged = false;
};

void write_history_csv(const std::string& path, const RunHistory& history);

struct TrainResult {
  InverseModel model;  // best-validation state
  RunHistory history;
  bool diverged = false;
};

TrainResult train_inverse(const TrainConfig& cfg, const EntityDataset& ds,
                          std::uint64_t seed);

struct UblResult {
  InverseModel model;
  PenaltyWeights weights;
  double chosen_t = 0.0;
  RunHistory history;
  bool diverged = false;
};

// Phase 2: estimate the uncertainty Gram on the validation span, freeze the
// eigen penalty, tune its temperature, then continue training (or restart,
// per config) with the penalized pseudo-inverse loss.
UblResult run_ubl(const TrainConfig& cfg, const InverseModel& base,
                  const EntityDataset& ds, std::uint64_t seed);

struct ForwardRun {
  ForwardModel model;
  std::vector<std::optional<double>> per_entity_nse;  // test span
  double mean_nse = 0.0;
  std::vector<std::vector<double>> test_predictions;  // per entity, test days
  RunHistory history;
  bool diverged = false;
};

ForwardRun train_forward_single(const TrainConfig& cfg, const EntityDataset& ds,
                                const Tensor& statics, std::uint64_t seed);

struct ForwardEnsemble {
  std::vector<ForwardRun> runs;
  double average_nse = 0.0;   // mean over runs of their mean test NSE
  double ensemble_nse = 0.0;  // NSE of the seed-averaged predictions
};

// Trains one forward model per configured seed. `statics` is the (N, |z|)
// matrix fed alongside the drivers: observed values or an inverse model's
// test-period mean reconstruction, in normalized units either way.
ForwardEnsemble train_forward(const TrainConfig& cfg, const EntityDataset& ds,
                              const Tensor& statics);

struct SweepCell {
  double fraction = 0.0;
  double noise_std = 0.0;
  double recon_mse = 0.0;
  double static_mse = 0.0;
  double epistemic_mean = 0.0;
  bool diverged = false;
};

struct SweepResult {
  SweepCell clean;
  std::vector<SweepCell> cells;  // fraction-major order
};

// One training run per (fraction, std) cell plus the clean baseline, all
// with the same seed, evaluated on the clean test span.
SweepResult robustness_sweep(const TrainConfig& cfg, const EntityDataset& ds,
                             const std::vector<double>& fractions,
                             const std::vector<double>& stds,
                             std::uint64_t seed);

}  // namespace invbasin
