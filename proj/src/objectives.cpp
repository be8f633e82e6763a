#include "invbasin/objectives.hpp"

#include <cmath>

namespace invbasin {

void validate(const LossWeights& w) {
  bool finite = std::isfinite(w.lambda_rec) && std::isfinite(w.lambda_cont) &&
                std::isfinite(w.lambda_inv) && std::isfinite(w.tau) &&
                std::isfinite(w.t_scale);
  if (!finite || w.lambda_rec < 0.0 || w.lambda_cont < 0.0 ||
      w.lambda_inv < 0.0 || w.tau <= 0.0 || w.t_scale <= 0.0) {
    throw ConfigError(
        "loss weights must be finite with lambdas >= 0, tau > 0, t_scale > 0");
  }
}

namespace objectives {

ad::Value reconstruction_loss(ad::Tape& tape,
                              const std::vector<ad::Value>& recon,
                              const std::vector<Tensor>& target) {
  if (recon.empty() || recon.size() != target.size()) {
    throw ContractError("reconstruction_loss: empty or mismatched step lists");
  }
  std::size_t rows = target.front().rows();
  std::size_t cols = target.front().cols();
  if (rows == 0) throw ContractError("reconstruction_loss: empty batch");
  ad::Value acc;
  for (std::size_t t = 0; t < recon.size(); ++t) {
    if (!tape.value(recon[t]).same_shape(target[t])) {
      throw ShapeError("reconstruction_loss: step " + std::to_string(t) +
                       " shapes differ: " +
                       tape.value(recon[t]).shape_string() + " vs " +
                       target[t].shape_string());
    }
    ad::Value sq =
        tape.sum(tape.square(tape.sub(recon[t], tape.constant(target[t]))));
    acc = t == 0 ? sq : tape.add(acc, sq);
  }
  double denom = static_cast<double>(rows) * static_cast<double>(cols) *
                 static_cast<double>(recon.size());
  return tape.scalar_mul(acc, 1.0 / denom);
}

ad::Value contrastive_loss(ad::Tape& tape, ad::Value embeddings, double tau,
                           bool verbatim) {
  const Tensor& e = tape.value(embeddings);
  if (e.rank() != 2 || e.shape()[0] % 2 != 0 || e.shape()[0] < 4) {
    throw ContractError(
        "contrastive_loss: need a (2N, d) embedding matrix with N >= 2, got " +
        e.shape_string());
  }
  if (tau <= 0.0) throw ContractError("contrastive_loss: tau must be > 0");
  std::size_t rows = e.shape()[0];
  std::size_t n = rows / 2;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < e.shape()[1]; ++j) s += e.at(i, j) * e.at(i, j);
    if (std::sqrt(s) < 1e-12) {
      throw NumericError("contrastive_loss: zero-norm embedding in row " +
                         std::to_string(i));
    }
  }

  ad::Value norms = tape.sqrt(tape.sum_rows(tape.square(embeddings)));
  ad::Value inv_norms =
      tape.div(tape.constant(Tensor::full({rows}, 1.0)), norms);
  ad::Value unit = tape.scale_rows(embeddings, inv_norms);
  ad::Value sims = tape.scalar_mul(tape.matmul_nt(unit, unit), 1.0 / tau);
  ad::Value expo = tape.exp(sims);
  ad::Value row_sums = tape.sum_rows(expo);

  // Mask selecting each row's positive partner: (i, i+N) and (i+N, i).
  Tensor mask({rows, rows});
  for (std::size_t i = 0; i < n; ++i) {
    mask.at(i, n + i) = 1.0;
    mask.at(n + i, i) = 1.0;
  }
  ad::Value numer = tape.sum_rows(tape.mul(expo, tape.constant(mask)));

  if (verbatim) {
    // The written ratio form: self term kept, no -log.
    ad::Value ratios = tape.div(numer, row_sums);
    return tape.scalar_mul(tape.sum(ratios), 1.0 / static_cast<double>(rows));
  }
  ad::Value denom = tape.sub(row_sums, tape.diag_part(expo));
  ad::Value total = tape.sub(tape.sum(tape.log(denom)),
                             tape.sum(tape.log(numer)));
  return tape.scalar_mul(total, 1.0 / static_cast<double>(rows));
}

ad::Value inverse_loss(ad::Tape& tape, ad::Value zhat, const Tensor& z) {
  const Tensor& pred = tape.value(zhat);
  if (!pred.same_shape(z) || pred.size() == 0) {
    throw ShapeError("inverse_loss: shapes " + pred.shape_string() + " vs " +
                     z.shape_string());
  }
  return tape.mean(tape.square(tape.sub(zhat, tape.constant(z))));
}

namespace {

void check_simplex(const PenaltyWeights& w, std::size_t features) {
  if (w.w.size() != features) {
    throw ContractError("penalty weights cover " + std::to_string(w.w.size()) +
                        " features, batch has " + std::to_string(features));
  }
  double sum = 0.0;
  for (double x : w.w) {
    if (x < -1e-6) throw ContractError("penalty weight below zero");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ContractError("penalty weights must sum to 1, got " +
                        std::to_string(sum));
  }
}

}  // namespace

ad::Value penalized_inverse_loss(ad::Tape& tape, ad::Value zhat,
                                 const Tensor& z, const PenaltyWeights& w,
                                 double t_scale) {
  if (t_scale <= 0.0) {
    throw ContractError("penalized_inverse_loss: t_scale must be > 0");
  }
  // Copy shape info out: value() references are invalidated by later pushes.
  std::size_t rows, cols;
  {
    const Tensor& pred = tape.value(zhat);
    if (pred.rank() != 2 || !pred.same_shape(z)) {
      throw ShapeError("penalized_inverse_loss: shapes " + pred.shape_string() +
                       " vs " + z.shape_string());
    }
    rows = pred.shape()[0];
    cols = pred.shape()[1];
  }
  check_simplex(w, cols);
  ad::Value base = inverse_loss(tape, zhat, z);
  Tensor wrow({cols});
  for (std::size_t j = 0; j < w.w.size(); ++j) wrow[j] = w.w[j];
  ad::Value weighted = tape.mul(tape.square(tape.sub(zhat, tape.constant(z))),
                                tape.constant(wrow));
  double denom =
      t_scale * static_cast<double>(rows) * static_cast<double>(cols);
  return tape.add(base, tape.scalar_mul(tape.sum(weighted), 1.0 / denom));
}

ad::Value total_loss(ad::Tape& tape, ad::Value rec, ad::Value cont,
                     ad::Value inv, const LossWeights& weights) {
  validate(weights);
  return tape.add(tape.add(tape.scalar_mul(rec, weights.lambda_rec),
                           tape.scalar_mul(cont, weights.lambda_cont)),
                  tape.scalar_mul(inv, weights.lambda_inv));
}

ad::Value free_energy(ad::Tape& tape, ad::Value kl, ad::Value nll,
                      std::size_t num_batches) {
  if (num_batches < 1) {
    throw ContractError("free_energy: num_batches must be >= 1");
  }
  return tape.add(
      tape.scalar_mul(kl, 1.0 / static_cast<double>(num_batches)), nll);
}

double reconstruction_loss(const std::vector<Tensor>& recon,
                           const std::vector<Tensor>& target) {
  ad::Tape tape;
  std::vector<ad::Value> rv;
  rv.reserve(recon.size());
  for (const Tensor& r : recon) rv.push_back(tape.constant(r));
  return tape.value(reconstruction_loss(tape, rv, target)).item();
}

double contrastive_loss(const Tensor& embeddings, double tau, bool verbatim) {
  ad::Tape tape;
  return tape
      .value(contrastive_loss(tape, tape.constant(embeddings), tau, verbatim))
      .item();
}

double inverse_loss(const Tensor& zhat, const Tensor& z) {
  ad::Tape tape;
  return tape.value(inverse_loss(tape, tape.constant(zhat), z)).item();
}

double penalized_inverse_loss(const Tensor& zhat, const Tensor& z,
                              const PenaltyWeights& w, double t_scale) {
  ad::Tape tape;
  return tape
      .value(penalized_inverse_loss(tape, tape.constant(zhat), z, w, t_scale))
      .item();
}

double free_energy(double kl, double nll, std::size_t num_batches) {
  if (num_batches < 1) {
    throw ContractError("free_energy: num_batches must be >= 1");
  }
  return kl / static_cast<double>(num_batches) + nll;
}

}  // namespace objectives
}  // namespace invbasin
