// Neural building blocks: LSTM cell, bidirectional sequence encoder with a
// ReLU-linear head, state-initialized LSTM decoder, two-layer static head,
// and variational (Bayes-by-backprop) linear layers with a configurable
// placement. Exactly one linear layer may be probabilistic at a time.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "invbasin/autodiff.hpp"
#include "invbasin/rng.hpp"
#include "invbasin/tensor.hpp"

namespace invbasin {

// Which linear layer carries a weight distribution instead of point weights.
enum class ProbPlacement {
  kDeterministic,
  kEncoder,      // encoder head linear
  kDecoder,     // decoder initial-state projection
  kStaticHead1,  // first static-head linear
  kStaticHead2,  // second static-head linear
  kReconHead,    // decoder per-step output linear
};

std::string placement_name(ProbPlacement p);
ProbPlacement placement_from_name(const std::string& name);

struct LstmParams {
  // Gate matrices are (hidden, input + hidden); biases are (hidden,).
  Tensor w_i, w_f, w_g, w_o;
  Tensor b_i, b_f, b_g, b_o;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

// A linear layer, optionally variational. For a variational layer `w`/`b`
// hold the means and `rho_w`/`rho_b` the pre-softplus scales, so the
// effective weight is w + softplus(rho) * eps.
struct LinearLayer {
  Tensor w;  // (out, in)
  Tensor b;  // (out,)
  Tensor rho_w, rho_b;
  bool bayesian = false;
};

struct ModelConfig {
  std::size_t input_channels = 0;  // drivers + response
  std::size_t static_count = 0;
  std::size_t hidden_size = 64;
  std::size_t embedding_size = 128;
  std::size_t static_hidden = 64;
  ProbPlacement placement = ProbPlacement::kDeterministic;
  double prior_std = 1.0;
  // The candidate gate uses tanh; set to run the all-sigmoid variant.
  bool candidate_gate_sigmoid = false;
};

struct InverseModel {
  ModelConfig config;
  LstmParams enc_fwd, enc_bwd, dec;
  LinearLayer enc_head;   // (embedding, 2*hidden)
  LinearLayer dec_init;   // (2*hidden, embedding)
  LinearLayer dec_out;    // (input_channels, hidden)
  LinearLayer static1;    // (static_hidden, embedding)
  LinearLayer static2;    // (static_count, static_hidden)

  bool probabilistic() const {
    return config.placement != ProbPlacement::kDeterministic;
  }
  const LinearLayer& bayes_layer() const;
  LinearLayer& bayes_layer();
};

// Xavier-uniform weights, zero biases except the LSTM forget bias (1.0),
// rho = -5 on the variational layer so training starts near-deterministic.
InverseModel init_inverse_model(const ModelConfig& config, Rng& rng);

LstmParams init_lstm(std::size_t input_size, std::size_t hidden, Rng& rng);
LinearLayer init_linear(std::size_t out, std::size_t in, Rng& rng,
                        bool bayesian);

// Deterministic iteration over named parameter tensors, checkpoint order.
void for_each_param(InverseModel& m,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(
    const InverseModel& m,
    const std::function<void(const std::string&, const Tensor&)>& fn);

// Standard-normal draws for the variational layer, one per training step.
struct BbbNoise {
  Tensor w, b;
  bool present = false;
};

BbbNoise draw_bbb_noise(const InverseModel& m, Rng& rng);

// Eager reparameterized sample: mu + softplus(rho) * eps.
Tensor bbb_sample(const Tensor& mu, const Tensor& rho, const Tensor& eps);

// Analytic KL( N(mu, softplus(rho)^2) || N(0, prior_std^2) ), summed over
// the layer's weights and biases.
double bbb_kl(const LinearLayer& layer, double prior_std);

namespace graph {

struct LstmState {
  ad::Value h, c;
};

struct BoundLstm {
  ad::Value w_i, w_f, w_g, w_o, b_i, b_f, b_g, b_o;
};

struct BoundLinear {
  ad::Value w, b;        // effective (possibly sampled) weights
  ad::Value mu_w, mu_b;  // leaves; equal to w/b when deterministic
  ad::Value rho_w, rho_b;
  bool bayesian = false;
};

// One LSTM cell update. `x_t` may be invalid to run a state-only step
// (used by the decoder, which receives no inputs).
LstmState lstm_step(ad::Tape& tape, ad::Value x_t, LstmState prev,
                    const BoundLstm& p, bool candidate_sigmoid);

// Binds a model's parameters onto a tape as leaves and exposes the forward
// builders. Pass `noise` drawn from draw_bbb_noise for a stochastic pass, or
// nullptr for the mean-weight (eps = 0) pass.
class BoundInverseModel {
 public:
  BoundInverseModel(ad::Tape& tape, const InverseModel& model,
                    const BbbNoise* noise);

  // steps[t] is the (batch, channels) input at time t.
  ad::Value encode(const std::vector<Tensor>& steps);
  std::vector<ad::Value> decode(ad::Value embedding, std::size_t T);
  ad::Value static_head(ad::Value embedding);

  // KL complexity cost of the variational layer; scalar zero constant for a
  // deterministic model.
  ad::Value kl();

  const std::vector<std::pair<std::string, ad::Value>>& bound_params() const {
    return params_;
  }

 private:
  BoundLinear bind_linear(const std::string& name, const LinearLayer& layer,
                          const Tensor* eps_w, const Tensor* eps_b);
  BoundLstm bind_lstm(const std::string& name, const LstmParams& p);
  ad::Value linear(ad::Value x, const BoundLinear& l) const;

  ad::Tape& tape_;
  const InverseModel& model_;
  BoundLstm enc_fwd_, enc_bwd_, dec_;
  BoundLinear enc_head_, dec_init_, dec_out_, static1_, static2_;
  std::vector<std::pair<std::string, ad::Value>> params_;
};

}  // namespace graph

// Single-layer LSTM + linear head for streamflow prediction from
// [drivers; statics] inputs.
struct ForwardModel {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  LstmParams lstm;
  LinearLayer head;  // (1, hidden)
};

ForwardModel init_forward_model(std::size_t input_size, std::size_t hidden,
                                Rng& rng);

void for_each_param(ForwardModel& m,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(
    const ForwardModel& m,
    const std::function<void(const std::string&, const Tensor&)>& fn);

namespace graph {

class BoundForwardModel {
 public:
  BoundForwardModel(ad::Tape& tape, const ForwardModel& model);

  // Runs the LSTM over the steps and returns per-step (batch, 1)
  // predictions. h0/c0 seed the state (zeros when null); h_final/c_final
  // receive value copies so evaluation can be chunked across tapes.
  std::vector<ad::Value> predict(const std::vector<Tensor>& steps,
                                 const Tensor* h0 = nullptr,
                                 const Tensor* c0 = nullptr,
                                 Tensor* h_final = nullptr,
                                 Tensor* c_final = nullptr);

  const std::vector<std::pair<std::string, ad::Value>>& bound_params() const {
    return params_;
  }

 private:
  ad::Tape& tape_;
  const ForwardModel& model_;
  BoundLstm lstm_;
  BoundLinear head_;
  std::vector<std::pair<std::string, ad::Value>> params_;
};

}  // namespace graph

}  // namespace invbasin
