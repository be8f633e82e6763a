// Training objectives: sequence reconstruction, entity-contrastive, static
// pseudo-inverse, its uncertainty-penalized variant, the weighted total, and
// variational free energy. Each loss has a graph builder (differentiable)
// and a plain eager form for evaluation.

#pragma once

#include <vector>

#include "invbasin/autodiff.hpp"
#include "invbasin/tensor.hpp"
#include "invbasin/ubl.hpp"

namespace invbasin {

struct LossWeights {
  double lambda_rec = 1.0;
  double lambda_cont = 1.0;
  double lambda_inv = 1.0;
  double tau = 0.1;      // contrastive temperature
  double t_scale = 1.0;  // penalty temperature
};

void validate(const LossWeights& w);

namespace objectives {

// Mean squared reconstruction error over every member of every positive
// pair: recon[t] and target[t] are the (2N, channels) step matrices.
ad::Value reconstruction_loss(ad::Tape& tape,
                              const std::vector<ad::Value>& recon,
                              const std::vector<Tensor>& target);

// NT-Xent over a (2N, d) embedding matrix whose first N rows are anchors
// and last N rows their positives. With `verbatim` the written similarity
// ratio is used as-is: the self term stays in the denominator and the -log
// is dropped (audit mode, not a trainable objective).
ad::Value contrastive_loss(ad::Tape& tape, ad::Value embeddings, double tau,
                           bool verbatim = false);

ad::Value inverse_loss(ad::Tape& tape, ad::Value zhat, const Tensor& z);

// inverse_loss plus the eigenvector-weighted penalty term scaled by
// 1 / t_scale. `w` must lie on the feature simplex.
ad::Value penalized_inverse_loss(ad::Tape& tape, ad::Value zhat,
                                 const Tensor& z, const PenaltyWeights& w,
                                 double t_scale);

ad::Value total_loss(ad::Tape& tape, ad::Value rec, ad::Value cont,
                     ad::Value inv, const LossWeights& weights);

// kl / num_batches + nll.
ad::Value free_energy(ad::Tape& tape, ad::Value kl, ad::Value nll,
                      std::size_t num_batches);

// Eager forms.
double reconstruction_loss(const std::vector<Tensor>& recon,
                           const std::vector<Tensor>& target);
double contrastive_loss(const Tensor& embeddings, double tau,
                        bool verbatim = false);
double inverse_loss(const Tensor& zhat, const Tensor& z);
double penalized_inverse_loss(const Tensor& zhat, const Tensor& z,
                              const PenaltyWeights& w, double t_scale);
double free_energy(double kl, double nll, std::size_t num_batches);

}  // namespace objectives
}  // namespace invbasin
