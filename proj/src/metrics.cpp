#include "invbasin/metrics.hpp"

#include <cmath>

#include "invbasin/errors.hpp"
#include "invbasin/parallel.hpp"
#include "invbasin/rng.hpp"

namespace invbasin {

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ContractError("mse: series must be non-empty and equal length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double rmse(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(mse(a, b));
}

std::optional<double> pearson(std::span<const double> a,
                              std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ContractError("pearson: need >= 2 paired samples");
  }
  double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::optional<double> nse(std::span<const double> pred,
                          std::span<const double> obs) {
  if (pred.size() != obs.size() || pred.size() < 2) {
    throw ContractError("nse: need >= 2 paired samples");
  }
  double mean_obs = 0.0;
  for (double o : obs) mean_obs += o;
  mean_obs /= static_cast<double>(obs.size());
  double err = 0.0, var = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    err += (obs[i] - pred[i]) * (obs[i] - pred[i]);
    var += (obs[i] - mean_obs) * (obs[i] - mean_obs);
  }
  if (var <= 0.0) return std::nullopt;
  return 1.0 - err / var;
}

Tensor unc_over_time(const std::vector<Tensor>& window_preds) {
  if (window_preds.empty()) {
    throw ContractError("unc_over_time: need at least one complete window");
  }
  const Tensor& first = window_preds.front();
  for (const Tensor& w : window_preds) {
    if (!w.same_shape(first) || w.rank() != 2) {
      throw ShapeError("unc_over_time: window prediction shapes differ");
    }
  }
  std::size_t k = window_preds.size();
  Tensor mean(first.shape());
  for (const Tensor& w : window_preds) {
    for (std::size_t i = 0; i < w.size(); ++i) mean[i] += w[i];
  }
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] /= static_cast<double>(k);
  }
  Tensor out(first.shape());
  for (const Tensor& w : window_preds) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      double d = w[i] - mean[i];
      out[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(out[i] / static_cast<double>(k));
  }
  return out;
}

double coverage_rate(const Tensor& z, const Tensor& mean_pred,
                     const Tensor& sigma, double multiplier) {
  if (!z.same_shape(mean_pred) || !z.same_shape(sigma) || z.size() == 0) {
    throw ShapeError("coverage_rate: z, mean and sigma must share a shape");
  }
  if (multiplier <= 0.0) {
    throw ContractError("coverage_rate: multiplier must be > 0");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (sigma[i] < 0.0) {
      throw ContractError("coverage_rate: sigma must be >= 0");
    }
    if (std::abs(z[i] - mean_pred[i]) <= multiplier * sigma[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(z.size());
}

std::vector<std::optional<double>> per_feature_pearson(const Tensor& a,
                                                       const Tensor& b) {
  if (!a.same_shape(b) || a.rank() != 2 || a.shape()[0] < 2) {
    throw ContractError(
        "per_feature_pearson: need matching (N >= 2, |z|) matrices");
  }
  std::size_t n = a.shape()[0], z = a.shape()[1];
  std::vector<std::optional<double>> out(z);
  std::vector<double> ca(n), cb(n);
  for (std::size_t j = 0; j < z; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      ca[i] = a.at(i, j);
      cb[i] = b.at(i, j);
    }
    out[j] = pearson(ca, cb);
  }
  return out;
}

std::vector<TradeoffEntry> tradeoff_ratio(const std::vector<double>& unc_base,
                                          const std::vector<double>& unc_ubl,
                                          const std::vector<double>& mse_base,
                                          const std::vector<double>& mse_ubl) {
  std::size_t z = unc_base.size();
  if (unc_ubl.size() != z || mse_base.size() != z || mse_ubl.size() != z) {
    throw ContractError("tradeoff_ratio: per-feature vectors must align");
  }
  std::vector<TradeoffEntry> out(z);
  for (std::size_t j = 0; j < z; ++j) {
    if (unc_base[j] <= 0.0 || mse_base[j] <= 0.0) {
      throw ContractError(
          "tradeoff_ratio: baseline uncertainty and MSE must be > 0");
    }
    double unc_drop = (unc_base[j] - unc_ubl[j]) / unc_base[j];
    double mse_rise = (mse_ubl[j] - mse_base[j]) / mse_base[j];
    if (mse_rise <= 0.0) {
      out[j].dominating = true;
      out[j].ratio = unc_drop;  // recorded for context, not a ratio
    } else {
      out[j].ratio = unc_drop / mse_rise;
    }
  }
  return out;
}

McStats mc_mean_std(
    std::size_t k_samples, std::uint64_t seed,
    const std::function<Tensor(std::size_t, Rng&)>& predict) {
  if (k_samples < 2) {
    throw ContractError("mc_mean_std: need at least 2 samples");
  }
  std::vector<Tensor> draws(k_samples);
  parallel_for(k_samples, [&](std::size_t k) {
    Rng rng(mix_seed(seed, stream::kMc), static_cast<std::uint64_t>(k));
    draws[k] = predict(k, rng);
  });
  McStats st;
  st.mean = Tensor(draws.front().shape());
  for (const Tensor& d : draws) {
    if (!d.same_shape(st.mean)) {
      throw ShapeError("mc_mean_std: predictions changed shape across trials");
    }
    for (std::size_t i = 0; i < d.size(); ++i) st.mean[i] += d[i];
  }
  for (std::size_t i = 0; i < st.mean.size(); ++i) {
    st.mean[i] /= static_cast<double>(k_samples);
  }
  st.std = Tensor(st.mean.shape());
  for (const Tensor& d : draws) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      double diff = d[i] - st.mean[i];
      st.std[i] += diff * diff;
    }
  }
  for (std::size_t i = 0; i < st.std.size(); ++i) {
    st.std[i] = std::sqrt(st.std[i] / static_cast<double>(k_samples));
  }
  return st;
}

}  // namespace invbasin
