// Uncertainty-based learning: turn a per-sample, per-feature epistemic
// uncertainty matrix into a simplex of penalty coefficients via the dominant
// eigenvector of its feature Gram matrix, and tune the penalty temperature
// on validation data.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "invbasin/tensor.hpp"

namespace invbasin {

struct PenaltyWeights {
  std::vector<double> w;  // simplex over features, w = v (.) v
  std::vector<double> v;  // unit eigenvector
  double lambda1 = 0.0;   // dominant eigenvalue
  std::vector<std::string> feature_names;
};

// Feature-by-feature Gram of the uncertainty magnitudes: C = sigma^T sigma / N
// for sigma of shape (N, |z|). Symmetric PSD by construction.
Tensor uncertainty_gram(const Tensor& sigma);

struct EigenResult {
  double lambda1 = 0.0;
  Tensor v;  // unit norm, first nonzero component non-negative
  std::size_t iterations = 0;
};

// Power iteration with a fixed seeded start; converges when successive
// iterates agree to 1e-10 in the max norm, errors out after 10,000 rounds.
// A zero matrix yields lambda1 = 0 with v = e1.
EigenResult top_eigenvector(const Tensor& gram);

PenaltyWeights penalty_weights(const Tensor& v);

// Evaluates each candidate temperature with `val_loss` (smaller is better)
// and returns the winner; ties go to the larger temperature, i.e. the
// weaker penalty.
double tune_temperature(const std::vector<double>& candidates,
                        const std::function<double(double)>& val_loss);

}  // namespace invbasin
