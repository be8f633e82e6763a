// Inverse-model evaluation over a temporal span: windowed static
// predictions, Monte-Carlo epistemic spread, uncertainty over time,
// coverage, correlations and reconstruction error.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "invbasin/data.hpp"
#include "invbasin/metrics.hpp"
#include "invbasin/nn.hpp"

namespace invbasin {

enum class Span { kTrain, kVal, kTest };

std::pair<std::size_t, std::size_t> span_bounds(const EntityDataset& ds,
                                                Span span);

// Static predictions over the non-overlapping `window`-day windows of the
// span (trailing partial window dropped). Returns the per-entity mean over
// windows; `per_window` (optional) receives one (N, |z|) tensor per window.
Tensor predict_static_windows(const InverseModel& model,
                              const EntityDataset& ds, std::size_t span_begin,
                              std::size_t span_end, std::size_t window,
                              const BbbNoise* noise,
                              std::vector<Tensor>* per_window = nullptr);

// Mean squared [drivers; response] reconstruction error over the span's
// windows, mean-weight pass.
double reconstruction_mse(const InverseModel& model, const EntityDataset& ds,
                          std::size_t span_begin, std::size_t span_end,
                          std::size_t window);

// Mean and population std of the per-entity static predictions across k_mc
// sampled-weight passes. Deterministic models get epistemic = 0.
McStats epistemic_uncertainty(const InverseModel& model,
                              const EntityDataset& ds, std::size_t span_begin,
                              std::size_t span_end, std::size_t window,
                              std::size_t k_mc, std::uint64_t seed);

struct EvalSummary {
  std::vector<std::string> feature_names;
  Tensor point_pred;  // (N, |z|), mean-weight pass, mean over windows
  Tensor mean_pred;   // (N, |z|), MC mean
  Tensor epistemic;   // (N, |z|), MC std
  Tensor unc_time;    // (N, |z|)

  double static_mse = 0.0;
  std::vector<double> static_mse_per_feature;
  std::optional<double> static_nse;  // mean over defined features
  std::vector<std::optional<double>> static_nse_per_feature;
  double coverage_1sd = 0.0;
  double coverage_2sd = 0.0;
  std::vector<std::optional<double>> corr_per_feature;
  double epistemic_mean = 0.0;
  double unc_time_mean = 0.0;
  double recon_mse = 0.0;

  std::size_t k_mc = 0;
  std::size_t window = 0;
};

EvalSummary evaluate_inverse(const InverseModel& model, const EntityDataset& ds,
                             Span span, std::size_t k_mc, std::uint64_t seed,
                             std::size_t window);

}  // namespace invbasin
