#include "invbasin/ubl.hpp"

#include <cmath>

#include "invbasin/errors.hpp"
#include "invbasin/rng.hpp"

namespace invbasin {

Tensor uncertainty_gram(const Tensor& sigma) {
  if (sigma.rank() != 2 || sigma.size() == 0) {
    throw ContractError("uncertainty_gram: expected non-empty (N, |z|) matrix");
  }
  std::size_t n = sigma.shape()[0];
  std::size_t z = sigma.shape()[1];
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!std::isfinite(sigma[i]) || sigma[i] < 0.0) {
      throw ContractError("uncertainty_gram: entries must be finite and >= 0");
    }
  }
  Tensor gram({z, z});
  for (std::size_t a = 0; a < z; ++a) {
    for (std::size_t b = a; b < z; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += sigma.at(i, a) * sigma.at(i, b);
      s /= static_cast<double>(n);
      gram.at(a, b) = s;
      gram.at(b, a) = s;
    }
  }
  return gram;
}

EigenResult top_eigenvector(const Tensor& gram) {
  if (gram.rank() != 2 || gram.shape()[0] != gram.shape()[1] ||
      gram.size() == 0) {
    throw ContractError("top_eigenvector: expected non-empty square matrix");
  }
  std::size_t z = gram.shape()[0];
  for (std::size_t a = 0; a < z; ++a) {
    for (std::size_t b = a + 1; b < z; ++b) {
      if (std::abs(gram.at(a, b) - gram.at(b, a)) > 1e-9) {
        throw ContractError("top_eigenvector: matrix is not symmetric");
      }
    }
  }

  bool all_zero = true;
  for (std::size_t i = 0; i < gram.size(); ++i) {
    if (gram[i] != 0.0) {
      all_zero = false;
      break;
    }
  }
  if (all_zero) {
    // Degenerate convention: no uncertainty anywhere.
    Tensor e1({z});
    e1[0] = 1.0;
    return {0.0, e1, 0};
  }

  // Fixed seeded start so results are reproducible across runs.
  Rng rng(0, stream::kPower);
  Tensor v = rng.normal_tensor({z});
  double norm = 0.0;
  for (std::size_t i = 0; i < z; ++i) norm += v[i] * v[i];
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < z; ++i) v[i] /= norm;

  Tensor next({z});
  constexpr std::size_t kMaxIters = 10000;
  for (std::size_t iter = 1; iter <= kMaxIters; ++iter) {
    for (std::size_t a = 0; a < z; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < z; ++b) s += gram.at(a, b) * v[b];
      next[a] = s;
    }
    double nn = 0.0;
    for (std::size_t i = 0; i < z; ++i) nn += next[i] * next[i];
    nn = std::sqrt(nn);
    if (nn < 1e-300) {
      // Start vector fell into the null space; restart from a basis vector.
      v = Tensor({z});
      v[(iter - 1) % z] = 1.0;
      continue;
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < z; ++i) {
      next[i] /= nn;
      diff = std::max(diff, std::abs(next[i] - v[i]));
    }
    v = next;
    if (diff < 1e-10) {
      double lambda = 0.0;
      for (std::size_t a = 0; a < z; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < z; ++b) s += gram.at(a, b) * v[b];
        lambda += v[a] * s;
      }
      // Sign convention: first nonzero component non-negative.
      for (std::size_t i = 0; i < z; ++i) {
        if (std::abs(v[i]) > 1e-14) {
          if (v[i] < 0.0)
            for (std::size_t j = 0; j < z; ++j) v[j] = -v[j];
          break;
        }
      }
      return {lambda, v, iter};
    }
  }
  throw NumericError(
      "top_eigenvector: power iteration did not converge in 10000 rounds; "
      "the spectral gap between the two largest eigenvalues is likely tiny");
}

PenaltyWeights penalty_weights(const Tensor& v) {
  if (v.rank() != 1 || v.size() == 0) {
    throw ContractError("penalty_weights: expected a non-empty vector");
  }
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) norm += v[i] * v[i];
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-9) {
    throw ContractError("penalty_weights: v must have unit norm");
  }
  PenaltyWeights pw;
  pw.v.assign(v.data(), v.data() + v.size());
  pw.w.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) pw.w[i] = v[i] * v[i];
  return pw;
}

double tune_temperature(const std::vector<double>& candidates,
                        const std::function<double(double)>& val_loss) {
  if (candidates.empty()) {
    throw ContractError("tune_temperature: empty candidate list");
  }
  for (double t : candidates) {
    if (!(t > 0.0)) {
      throw ContractError("tune_temperature: candidates must be positive");
    }
  }
  double best_t = candidates.front();
  double best = val_loss(best_t);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    double t = candidates[i];
    double loss = val_loss(t);
    if (loss < best || (loss == best && t > best_t)) {
      best = loss;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace invbasin
