// Evaluation quantities: Monte-Carlo epistemic spread, uncertainty over
// time, interval coverage, correlation between the two uncertainty
// estimates, the UBL trade-off ratio, and regression scores.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "invbasin/tensor.hpp"

namespace invbasin {

double mse(std::span<const double> a, std::span<const double> b);
double rmse(std::span<const double> a, std::span<const double> b);

// Pearson correlation; nullopt when either side has (near-)zero variance.
std::optional<double> pearson(std::span<const double> a,
                              std::span<const double> b);

// Nash-Sutcliffe efficiency of predictions against observations; nullopt
// when the observations are constant.
std::optional<double> nse(std::span<const double> pred,
                          std::span<const double> obs);

// Population standard deviation of per-window static predictions across
// windows, per (entity, feature). Every window tensor is (N, |z|).
Tensor unc_over_time(const std::vector<Tensor>& window_preds);

// Fraction of cells with z inside [mean - m*sigma, mean + m*sigma].
double coverage_rate(const Tensor& z, const Tensor& mean_pred,
                     const Tensor& sigma, double multiplier);

// Column-wise Pearson correlation across rows (entities).
std::vector<std::optional<double>> per_feature_pearson(const Tensor& a,
                                                       const Tensor& b);

struct TradeoffEntry {
  double ratio = 0.0;
  // Uncertainty fell with no MSE cost; the signed ratio is meaningless.
  bool dominating = false;
};

std::vector<TradeoffEntry> tradeoff_ratio(const std::vector<double>& unc_base,
                                          const std::vector<double>& unc_ubl,
                                          const std::vector<double>& mse_base,
                                          const std::vector<double>& mse_ubl);

struct McStats {
  Tensor mean;
  Tensor std;  // population (1/K)
};

// Mean and spread of `predict` over K seeded trials. Trial k receives an
// RNG derived from (seed, k), so the result is independent of evaluation
// order or worker count.
McStats mc_mean_std(std::size_t k_samples, std::uint64_t seed,
                    const std::function<Tensor(std::size_t, class Rng&)>& predict);

}  // namespace invbasin
