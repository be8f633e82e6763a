#include "invbasin/nn.hpp"

#include <cmath>

namespace invbasin {

std::string placement_name(ProbPlacement p) {
  switch (p) {
    case ProbPlacement::kDeterministic: return "deterministic";
    case ProbPlacement::kEncoder: return "encoder";
    case ProbPlacement::kDecoder: return "decoder";
    case ProbPlacement::kStaticHead1: return "static_head1";
    case ProbPlacement::kStaticHead2: return "static_head2";
    case ProbPlacement::kReconHead: return "recon_head";
  }
  return "deterministic";
}

ProbPlacement placement_from_name(const std::string& name) {
  if (name == "deterministic") return ProbPlacement::kDeterministic;
  if (name == "encoder") return ProbPlacement::kEncoder;
  if (name == "decoder") return ProbPlacement::kDecoder;
  if (name == "static_head1") return ProbPlacement::kStaticHead1;
  if (name == "static_head2") return ProbPlacement::kStaticHead2;
  if (name == "recon_head") return ProbPlacement::kReconHead;
  throw ConfigError("unknown probabilistic placement '" + name + "'");
}

const LinearLayer& InverseModel::bayes_layer() const {
  switch (config.placement) {
    case ProbPlacement::kEncoder: return enc_head;
    case ProbPlacement::kDecoder: return dec_init;
    case ProbPlacement::kReconHead: return dec_out;
    case ProbPlacement::kStaticHead1: return static1;
    case ProbPlacement::kStaticHead2: return static2;
    case ProbPlacement::kDeterministic: break;
  }
  throw ContractError("bayes_layer() on a deterministic model");
}

LinearLayer& InverseModel::bayes_layer() {
  return const_cast<LinearLayer&>(
      static_cast<const InverseModel&>(*this).bayes_layer());
}

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return rng.uniform_tensor({rows, cols}, -limit, limit);
}

constexpr double kRhoInit = -5.0;

}  // namespace

LstmParams init_lstm(std::size_t input_size, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden;
  std::size_t in = input_size + hidden;
  p.w_i = xavier(hidden, in, rng);
  p.w_f = xavier(hidden, in, rng);
  p.w_g = xavier(hidden, in, rng);
  p.w_o = xavier(hidden, in, rng);
  p.b_i = Tensor({hidden});
  p.b_f = Tensor::full({hidden}, 1.0);  // open forget gate at init
  p.b_g = Tensor({hidden});
  p.b_o = Tensor({hidden});
  return p;
}

LinearLayer init_linear(std::size_t out, std::size_t in, Rng& rng,
                        bool bayesian) {
  LinearLayer l;
  l.w = xavier(out, in, rng);
  l.b = Tensor({out});
  l.bayesian = bayesian;
  if (bayesian) {
    l.rho_w = Tensor::full({out, in}, kRhoInit);
    l.rho_b = Tensor::full({out}, kRhoInit);
  }
  return l;
}

InverseModel init_inverse_model(const ModelConfig& config, Rng& rng) {
  if (config.input_channels == 0 || config.static_count == 0) {
    throw ConfigError("model requires input_channels > 0 and static_count > 0");
  }
  InverseModel m;
  m.config = config;
  std::size_t h = config.hidden_size;
  std::size_t e = config.embedding_size;
  auto is = [&](ProbPlacement p) { return config.placement == p; };
  m.enc_fwd = init_lstm(config.input_channels, h, rng);
  m.enc_bwd = init_lstm(config.input_channels, h, rng);
  m.enc_head = init_linear(e, 2 * h, rng, is(ProbPlacement::kEncoder));
  m.dec_init = init_linear(2 * h, e, rng, is(ProbPlacement::kDecoder));
  m.dec = init_lstm(0, h, rng);  // decoder is driven purely by state
  m.dec_out =
      init_linear(config.input_channels, h, rng, is(ProbPlacement::kReconHead));
  m.static1 =
      init_linear(config.static_hidden, e, rng, is(ProbPlacement::kStaticHead1));
  m.static2 = init_linear(config.static_count, config.static_hidden, rng,
                          is(ProbPlacement::kStaticHead2));
  return m;
}

namespace {

template <typename Model, typename Fn>
void visit_lstm(const std::string& prefix, Model& p, Fn&& fn) {
  fn(prefix + ".w_i", p.w_i);
  fn(prefix + ".w_f", p.w_f);
  fn(prefix + ".w_g", p.w_g);
  fn(prefix + ".w_o", p.w_o);
  fn(prefix + ".b_i", p.b_i);
  fn(prefix + ".b_f", p.b_f);
  fn(prefix + ".b_g", p.b_g);
  fn(prefix + ".b_o", p.b_o);
}

template <typename Layer, typename Fn>
void visit_linear(const std::string& prefix, Layer& l, Fn&& fn) {
  fn(prefix + ".w", l.w);
  fn(prefix + ".b", l.b);
  if (l.bayesian) {
    fn(prefix + ".rho_w", l.rho_w);
    fn(prefix + ".rho_b", l.rho_b);
  }
}

template <typename Model, typename Fn>
void visit_inverse(Model& m, Fn&& fn) {
  visit_lstm("enc_fwd", m.enc_fwd, fn);
  visit_lstm("enc_bwd", m.enc_bwd, fn);
  visit_linear("enc_head", m.enc_head, fn);
  visit_linear("dec_init", m.dec_init, fn);
  visit_lstm("dec", m.dec, fn);
  visit_linear("dec_out", m.dec_out, fn);
  visit_linear("static1", m.static1, fn);
  visit_linear("static2", m.static2, fn);
}

}  // namespace

void for_each_param(InverseModel& m,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_inverse(m, fn);
}

void for_each_param(
    const InverseModel& m,
    const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_inverse(m, fn);
}

BbbNoise draw_bbb_noise(const InverseModel& m, Rng& rng) {
  BbbNoise n;
  if (!m.probabilistic()) return n;
  const LinearLayer& l = m.bayes_layer();
  n.w = rng.normal_tensor(l.w.shape());
  n.b = rng.normal_tensor(l.b.shape());
  n.present = true;
  return n;
}

Tensor bbb_sample(const Tensor& mu, const Tensor& rho, const Tensor& eps) {
  if (!mu.same_shape(rho) || !mu.same_shape(eps)) {
    throw ShapeError("bbb_sample: mu " + mu.shape_string() + ", rho " +
                     rho.shape_string() + ", eps " + eps.shape_string() +
                     " must match");
  }
  Tensor out(mu.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double sp = std::max(rho[i], 0.0) + std::log1p(std::exp(-std::abs(rho[i])));
    out[i] = mu[i] + sp * eps[i];
  }
  return out;
}

namespace {

double kl_sum(const Tensor& mu, const Tensor& rho, double prior_std) {
  double kl = 0.0;
  double p2 = prior_std * prior_std;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double sq = std::max(rho[i], 0.0) + std::log1p(std::exp(-std::abs(rho[i])));
    kl += std::log(prior_std / sq) +
          (sq * sq + mu[i] * mu[i]) / (2.0 * p2) - 0.5;
  }
  return kl;
}

}  // namespace

double bbb_kl(const LinearLayer& layer, double prior_std) {
  if (prior_std <= 0.0) {
    throw ContractError("bbb_kl: prior_std must be positive");
  }
  if (!layer.bayesian) return 0.0;
  return kl_sum(layer.w, layer.rho_w, prior_std) +
         kl_sum(layer.b, layer.rho_b, prior_std);
}

namespace graph {

LstmState lstm_step(ad::Tape& t, ad::Value x_t, LstmState prev,
                    const BoundLstm& p, bool candidate_sigmoid) {
  ad::Value xh = x_t.valid() ? t.concat_cols(x_t, prev.h) : prev.h;
  ad::Value i = t.sigmoid(t.add(t.matmul_nt(xh, p.w_i), p.b_i));
  ad::Value f = t.sigmoid(t.add(t.matmul_nt(xh, p.w_f), p.b_f));
  ad::Value g_pre = t.add(t.matmul_nt(xh, p.w_g), p.b_g);
  ad::Value g = candidate_sigmoid ? t.sigmoid(g_pre) : t.tanh(g_pre);
  ad::Value o = t.sigmoid(t.add(t.matmul_nt(xh, p.w_o), p.b_o));
  ad::Value c = t.add(t.mul(f, prev.c), t.mul(i, g));
  ad::Value h = t.mul(o, t.tanh(c));
  return {h, c};
}

BoundInverseModel::BoundInverseModel(ad::Tape& tape, const InverseModel& model,
                                     const BbbNoise* noise)
    : tape_(tape), model_(model) {
  enc_fwd_ = bind_lstm("enc_fwd", model.enc_fwd);
  enc_bwd_ = bind_lstm("enc_bwd", model.enc_bwd);
  const Tensor* ew = noise && noise->present ? &noise->w : nullptr;
  const Tensor* eb = noise && noise->present ? &noise->b : nullptr;
  auto eps_for = [&](ProbPlacement p) {
    bool active = model.config.placement == p && ew != nullptr;
    return std::pair<const Tensor*, const Tensor*>(active ? ew : nullptr,
                                                   active ? eb : nullptr);
  };
  auto [hw, hb] = eps_for(ProbPlacement::kEncoder);
  enc_head_ = bind_linear("enc_head", model.enc_head, hw, hb);
  auto [iw, ib] = eps_for(ProbPlacement::kDecoder);
  dec_init_ = bind_linear("dec_init", model.dec_init, iw, ib);
  dec_ = bind_lstm("dec", model.dec);
  auto [ow, ob] = eps_for(ProbPlacement::kReconHead);
  dec_out_ = bind_linear("dec_out", model.dec_out, ow, ob);
  auto [s1w, s1b] = eps_for(ProbPlacement::kStaticHead1);
  static1_ = bind_linear("static1", model.static1, s1w, s1b);
  auto [s2w, s2b] = eps_for(ProbPlacement::kStaticHead2);
  static2_ = bind_linear("static2", model.static2, s2w, s2b);
}

BoundLstm BoundInverseModel::bind_lstm(const std::string& name,
                                       const LstmParams& p) {
  BoundLstm b;
  b.w_i = tape_.leaf(p.w_i);
  b.w_f = tape_.leaf(p.w_f);
  b.w_g = tape_.leaf(p.w_g);
  b.w_o = tape_.leaf(p.w_o);
  b.b_i = tape_.leaf(p.b_i);
  b.b_f = tape_.leaf(p.b_f);
  b.b_g = tape_.leaf(p.b_g);
  b.b_o = tape_.leaf(p.b_o);
  params_.emplace_back(name + ".w_i", b.w_i);
  params_.emplace_back(name + ".w_f", b.w_f);
  params_.emplace_back(name + ".w_g", b.w_g);
  params_.emplace_back(name + ".w_o", b.w_o);
  params_.emplace_back(name + ".b_i", b.b_i);
  params_.emplace_back(name + ".b_f", b.b_f);
  params_.emplace_back(name + ".b_g", b.b_g);
  params_.emplace_back(name + ".b_o", b.b_o);
  return b;
}

BoundLinear BoundInverseModel::bind_linear(const std::string& name,
                                           const LinearLayer& layer,
                                           const Tensor* eps_w,
                                           const Tensor* eps_b) {
  BoundLinear b;
  b.bayesian = layer.bayesian;
  b.mu_w = tape_.leaf(layer.w);
  b.mu_b = tape_.leaf(layer.b);
  params_.emplace_back(name + ".w", b.mu_w);
  params_.emplace_back(name + ".b", b.mu_b);
  if (layer.bayesian) {
    b.rho_w = tape_.leaf(layer.rho_w);
    b.rho_b = tape_.leaf(layer.rho_b);
    params_.emplace_back(name + ".rho_w", b.rho_w);
    params_.emplace_back(name + ".rho_b", b.rho_b);
  }
  if (eps_w != nullptr) {
    b.w = tape_.add(b.mu_w,
                    tape_.mul(tape_.softplus(b.rho_w), tape_.constant(*eps_w)));
    b.b = tape_.add(b.mu_b,
                    tape_.mul(tape_.softplus(b.rho_b), tape_.constant(*eps_b)));
  } else {
    b.w = b.mu_w;
    b.b = b.mu_b;
  }
  return b;
}

ad::Value BoundInverseModel::linear(ad::Value x, const BoundLinear& l) const {
  return tape_.add(tape_.matmul_nt(x, l.w), l.b);
}

ad::Value BoundInverseModel::encode(const std::vector<Tensor>& steps) {
  if (steps.empty()) {
    throw ContractError("encode: empty sequence");
  }
  std::size_t batch = steps.front().rows();
  std::size_t h = model_.config.hidden_size;
  ad::Value zero = tape_.constant(Tensor({batch, h}));
  LstmState fwd{zero, zero};
  for (std::size_t t = 0; t < steps.size(); ++t) {
    fwd = lstm_step(tape_, tape_.constant(steps[t]), fwd, enc_fwd_,
                    model_.config.candidate_gate_sigmoid);
  }
  LstmState bwd{zero, zero};
  for (std::size_t t = steps.size(); t-- > 0;) {
    bwd = lstm_step(tape_, tape_.constant(steps[t]), bwd, enc_bwd_,
                    model_.config.candidate_gate_sigmoid);
  }
  ad::Value cat = tape_.concat_cols(fwd.h, bwd.h);
  return tape_.relu(linear(cat, enc_head_));
}

std::vector<ad::Value> BoundInverseModel::decode(ad::Value embedding,
                                                 std::size_t T) {
  if (T == 0) {
    throw ContractError("decode: T must be positive");
  }
  std::size_t h = model_.config.hidden_size;
  ad::Value init = linear(embedding, dec_init_);
  std::size_t batch = tape_.value(init).shape()[0];
  LstmState st{tape_.slice(init, 0, batch, 0, h),
               tape_.slice(init, 0, batch, h, 2 * h)};
  std::vector<ad::Value> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    st = lstm_step(tape_, ad::Value{}, st, dec_,
                   model_.config.candidate_gate_sigmoid);
    out.push_back(linear(st.h, dec_out_));
  }
  return out;
}

ad::Value BoundInverseModel::static_head(ad::Value embedding) {
  ad::Value hidden = tape_.relu(linear(embedding, static1_));
  return linear(hidden, static2_);
}

namespace {

ad::Value kl_node(ad::Tape& t, ad::Value mu, ad::Value rho, double prior_std) {
  ad::Value sq = t.softplus(rho);
  ad::Value quad = t.scalar_mul(t.add(t.square(sq), t.square(mu)),
                                1.0 / (2.0 * prior_std * prior_std));
  ad::Value term =
      t.sub(t.scalar_add(quad, std::log(prior_std) - 0.5), t.log(sq));
  return t.sum(term);
}

}  // namespace

ad::Value BoundInverseModel::kl() {
  const BoundLinear* l = nullptr;
  switch (model_.config.placement) {
    case ProbPlacement::kEncoder: l = &enc_head_; break;
    case ProbPlacement::kDecoder: l = &dec_init_; break;
    case ProbPlacement::kReconHead: l = &dec_out_; break;
    case ProbPlacement::kStaticHead1: l = &static1_; break;
    case ProbPlacement::kStaticHead2: l = &static2_; break;
    case ProbPlacement::kDeterministic:
      return tape_.constant(Tensor::scalar(0.0));
  }
  double prior = model_.config.prior_std;
  return tape_.add(kl_node(tape_, l->mu_w, l->rho_w, prior),
                   kl_node(tape_, l->mu_b, l->rho_b, prior));
}

}  // namespace graph

ForwardModel init_forward_model(std::size_t input_size, std::size_t hidden,
                                Rng& rng) {
  ForwardModel m;
  m.input_size = input_size;
  m.hidden_size = hidden;
  m.lstm = init_lstm(input_size, hidden, rng);
  m.head = init_linear(1, hidden, rng, false);
  return m;
}

namespace {

template <typename Model, typename Fn>
void visit_forward(Model& m, Fn&& fn) {
  visit_lstm("lstm", m.lstm, fn);
  visit_linear("head", m.head, fn);
}

}  // namespace

void for_each_param(ForwardModel& m,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_forward(m, fn);
}

void for_each_param(
    const ForwardModel& m,
    const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_forward(m, fn);
}

namespace graph {

BoundForwardModel::BoundForwardModel(ad::Tape& tape, const ForwardModel& model)
    : tape_(tape), model_(model) {
  auto bind = [&](const std::string& name, const Tensor& t) {
    ad::Value v = tape_.leaf(t);
    params_.emplace_back(name, v);
    return v;
  };
  lstm_.w_i = bind("lstm.w_i", model.lstm.w_i);
  lstm_.w_f = bind("lstm.w_f", model.lstm.w_f);
  lstm_.w_g = bind("lstm.w_g", model.lstm.w_g);
  lstm_.w_o = bind("lstm.w_o", model.lstm.w_o);
  lstm_.b_i = bind("lstm.b_i", model.lstm.b_i);
  lstm_.b_f = bind("lstm.b_f", model.lstm.b_f);
  lstm_.b_g = bind("lstm.b_g", model.lstm.b_g);
  lstm_.b_o = bind("lstm.b_o", model.lstm.b_o);
  head_.w = bind("head.w", model.head.w);
  head_.b = bind("head.b", model.head.b);
  head_.mu_w = head_.w;
  head_.mu_b = head_.b;
}

std::vector<ad::Value> BoundForwardModel::predict(
    const std::vector<Tensor>& steps, const Tensor* h0, const Tensor* c0,
    Tensor* h_final, Tensor* c_final) {
  if (steps.empty()) {
    throw ContractError("predict: empty sequence");
  }
  std::size_t batch = steps.front().rows();
  LstmState st;
  st.h = h0 != nullptr ? tape_.constant(*h0)
                       : tape_.constant(Tensor({batch, model_.hidden_size}));
  st.c = c0 != nullptr ? tape_.constant(*c0)
                       : tape_.constant(Tensor({batch, model_.hidden_size}));
  std::vector<ad::Value> out;
  out.reserve(steps.size());
  for (const Tensor& x : steps) {
    st = lstm_step(tape_, tape_.constant(x), st, lstm_, false);
    out.push_back(tape_.add(tape_.matmul_nt(st.h, head_.w), head_.b));
  }
  if (h_final != nullptr) *h_final = tape_.value(st.h);
  if (c_final != nullptr) *c_final = tape_.value(st.c);
  return out;
}

}  // namespace graph

}  // namespace invbasin
