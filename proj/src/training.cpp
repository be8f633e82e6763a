#include "invbasin/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "invbasin/parallel.hpp"

namespace invbasin {

void Adam::step(const std::vector<std::pair<std::string, Tensor*>>& params,
                const std::map<std::string, Tensor>& grads) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, tensor] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    auto& [m, v] = state_[name];
    if (m.empty()) {
      m = Tensor(tensor->shape());
      v = Tensor(tensor->shape());
    }
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      (*tensor)[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double clip_global_norm(std::map<std::string, Tensor>& grads, double cap) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    (void)name;
    for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  double norm = std::sqrt(sq);
  if (cap > 0.0 && norm > cap) {
    double scale = cap / norm;
    for (auto& [name, g] : grads) {
      (void)name;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

void write_history_csv(const std::string& path, const RunHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "epoch,train_total,train_rec,train_cont,train_inv,train_pen_inv,"
         "train_kl,val_total,val_rec,val_cont,val_inv,val_kl,wall_s,best\n";
  char buf[512];
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const EpochStats& e = history.epochs[i];
    std::snprintf(buf, sizeof(buf),
                  "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,"
                  "%.10g,%.10g,%.3f,%d\n",
                  i, e.train_total, e.train_rec, e.train_cont, e.train_inv,
                  e.train_pen_inv, e.train_kl, e.val_total, e.val_rec,
                  e.val_cont, e.val_inv, e.val_kl, e.wall_s, e.best ? 1 : 0);
    out << buf;
  }
}

namespace {

ModelConfig model_config_from(const TrainConfig& cfg, const EntityDataset& ds) {
  ModelConfig mc;
  mc.input_channels = ds.channels();
  mc.static_count = ds.num_statics();
  mc.hidden_size = cfg.hidden;
  mc.embedding_size = cfg.embedding;
  mc.static_hidden = cfg.static_hidden;
  if (cfg.mode == TrainMode::kDeterministic) {
    mc.placement = ProbPlacement::kDeterministic;
  } else {
    if (cfg.placement == ProbPlacement::kDeterministic) {
      throw ConfigError(
          "probabilistic mode requires a non-deterministic placement");
    }
    mc.placement = cfg.placement;
  }
  mc.prior_std = cfg.prior_std;
  mc.candidate_gate_sigmoid = cfg.candidate_gate_sigmoid;
  return mc;
}

Tensor stacked_statics(const SequenceBatch& batch) {
  std::size_t b = batch.size();
  std::size_t dz = batch.statics.shape()[1];
  Tensor out({2 * b, dz});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < dz; ++j) {
      out.at(i, j) = batch.statics.at(i, j);
      out.at(b + i, j) = batch.statics.at(i, j);
    }
  }
  return out;
}

struct StepLosses {
  double total = 0, rec = 0, cont = 0, inv = 0, pen_inv = 0, kl = 0;
};

StepLosses batch_losses(ad::Tape& tape, graph::BoundInverseModel& bound,
                        const SequenceBatch& batch, const TrainConfig& cfg,
                        const PenaltyWeights* penalty, double t_scale,
                        ad::Value* objective) {
  auto steps = batch.step_matrices();
  ad::Value emb = bound.encode(steps);
  auto recon = bound.decode(emb, batch.length);
  ad::Value zhat = bound.static_head(emb);
  Tensor targets = stacked_statics(batch);

  ad::Value rec = objectives::reconstruction_loss(tape, recon, steps);
  ad::Value cont = objectives::contrastive_loss(tape, emb, cfg.weights.tau,
                                                cfg.contrastive_verbatim);
  ad::Value inv = objectives::inverse_loss(tape, zhat, targets);
  ad::Value inv_used =
      penalty != nullptr
          ? objectives::penalized_inverse_loss(tape, zhat, targets, *penalty,
                                               t_scale)
          : inv;
  ad::Value total = objectives::total_loss(tape, rec, cont, inv_used,
                                           cfg.weights);
  ad::Value kl = bound.kl();
  ad::Value obj =
      objectives::free_energy(tape, kl, total, cfg.steps_per_epoch);

  StepLosses out;
  out.rec = tape.value(rec).item();
  out.cont = tape.value(cont).item();
  out.inv = tape.value(inv).item();
  out.pen_inv = tape.value(inv_used).item();
  out.total = tape.value(total).item();
  out.kl = tape.value(kl).item();
  if (objective != nullptr) *objective = obj;
  return out;
}

// Mean-weight validation pass over fixed seeded batches.
StepLosses validate_model(const InverseModel& model, const TrainConfig& cfg,
                          const EntityDataset& ds, std::uint64_t eff_seed,
                          const PenaltyWeights* penalty, double t_scale) {
  Rng val_rng(eff_seed, stream::kValSampler);
  StepLosses acc;
  for (std::size_t b = 0; b < cfg.val_batches; ++b) {
    SequenceBatch batch = sample_pairs(ds, ds.train_end, ds.val_end,
                                       cfg.train_window, cfg.batch_size,
                                       val_rng);
    ad::Tape tape;
    graph::BoundInverseModel bound(tape, model, nullptr);
    StepLosses sl =
        batch_losses(tape, bound, batch, cfg, penalty, t_scale, nullptr);
    acc.total += sl.total;
    acc.rec += sl.rec;
    acc.cont += sl.cont;
    acc.inv += sl.inv;
    acc.pen_inv += sl.pen_inv;
    acc.kl += sl.kl;
  }
  double n = static_cast<double>(cfg.val_batches);
  acc.total /= n;
  acc.rec /= n;
  acc.cont /= n;
  acc.inv /= n;
  acc.pen_inv /= n;
  acc.kl /= n;
  return acc;
}

// Shared training loop. `salt` decouples the RNG streams of the phases that
// reuse one seed (baseline, temperature tuning, phase 2).
TrainResult train_loop(const TrainConfig& cfg, const EntityDataset& ds,
                       std::uint64_t seed, std::uint64_t salt,
                       InverseModel model, const PenaltyWeights* penalty,
                       double t_scale, std::size_t epochs) {
  if (!ds.normalized) {
    throw ContractError("dataset must be split and normalized before training");
  }
  std::uint64_t eff = mix_seed(seed, 7770 + salt);
  Rng sampler(eff, stream::kSampler);
  Rng eps_rng(eff, stream::kEps);
  bool stochastic = model.probabilistic();
  NoiseGate gate(NoiseSpec{cfg.noise_fraction, cfg.noise_std, eff},
                 epochs * cfg.steps_per_epoch * cfg.batch_size * 2);
  Adam opt(cfg.adam);

  TrainResult result;
  result.model = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    EpochStats es;
    bool diverged = false;
    std::size_t completed = 0;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      SequenceBatch batch = sample_positive_pairs(ds, cfg.train_window,
                                                  cfg.batch_size, sampler);
      gate.apply(batch);
      BbbNoise noise;
      if (stochastic) noise = draw_bbb_noise(model, eps_rng);
      try {
        ad::Tape tape;
        graph::BoundInverseModel bound(tape, model,
                                       noise.present ? &noise : nullptr);
        ad::Value objective;
        StepLosses sl = batch_losses(tape, bound, batch, cfg, penalty, t_scale,
                                     &objective);
        tape.backward(objective);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, v] : bound.bound_params()) {
          grads[name] = tape.grad(v);
        }
        clip_global_norm(grads, cfg.clip_norm);
        std::vector<std::pair<std::string, Tensor*>> params;
        for_each_param(model, [&](const std::string& name, Tensor& t) {
          params.emplace_back(name, &t);
        });
        opt.step(params, grads);
        es.train_total += sl.total;
        es.train_rec += sl.rec;
        es.train_cont += sl.cont;
        es.train_inv += sl.inv;
        es.train_pen_inv += sl.pen_inv;
        es.train_kl += sl.kl;
        ++completed;
      } catch (const NumericError&) {
        diverged = true;
        break;
      }
    }
    if (completed > 0) {
      double n = static_cast<double>(completed);
      es.train_total /= n;
      es.train_rec /= n;
      es.train_cont /= n;
      es.train_inv /= n;
      es.train_pen_inv /= n;
      es.train_kl /= n;
    }
    if (diverged) {
      es.wall_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
      result.history.epochs.push_back(es);
      result.history.diverged = true;
      result.diverged = true;
      break;  // result.model still holds the best finite state
    }

    StepLosses val;
    try {
      val = validate_model(model, cfg, ds, eff, penalty, t_scale);
    } catch (const NumericError&) {
      result.history.diverged = true;
      result.diverged = true;
      break;
    }
    es.val_total = val.total;
    es.val_rec = val.rec;
    es.val_cont = val.cont;
    es.val_inv = val.inv;
    es.val_kl = val.kl;
    es.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
    if (val.total < best_val) {
      best_val = val.total;
      result.history.best_epoch = result.history.epochs.size();
      result.model = model;
      since_best = 0;
      es.best = true;
    } else {
      ++since_best;
    }
    result.history.epochs.push_back(es);
    if (since_best >= cfg.patience) break;
  }
  return result;
}

}  // namespace

TrainResult train_inverse(const TrainConfig& cfg, const EntityDataset& ds,
                          std::uint64_t seed) {
  Rng init_rng(mix_seed(seed, 7770), stream::kInit);
  InverseModel model = init_inverse_model(model_config_from(cfg, ds), init_rng);
  return train_loop(cfg, ds, seed, 0, std::move(model), nullptr,
                    cfg.weights.t_scale, cfg.epochs);
}

UblResult run_ubl(const TrainConfig& cfg, const InverseModel& base,
                  const EntityDataset& ds, std::uint64_t seed) {
  if (!base.probabilistic()) {
    throw ContractError("UBL phase 2 requires a probabilistic base checkpoint");
  }
  auto [vb, ve] = span_bounds(ds, Span::kVal);
  McStats mc = epistemic_uncertainty(base, ds, vb, ve, cfg.window, cfg.k_mc,
                                     mix_seed(seed, 4242));
  EigenResult eig = top_eigenvector(uncertainty_gram(mc.std));
  PenaltyWeights pw = penalty_weights(eig.v);
  pw.lambda1 = eig.lambda1;
  pw.feature_names = ds.static_names;

  // Short fine-tune per candidate temperature; selection on validation
  // pseudo-inverse loss (unpenalized). Candidates run in parallel.
  std::vector<double> losses(cfg.t_candidates.size());
  parallel_for(cfg.t_candidates.size(), [&](std::size_t i) {
    TrainResult r = train_loop(cfg, ds, seed, 2, base, &pw,
                               cfg.t_candidates[i], cfg.tune_epochs);
    losses[i] = r.history.epochs.empty()
                    ? std::numeric_limits<double>::infinity()
                    : r.history.epochs[r.history.best_epoch].val_inv;
  });
  std::size_t call = 0;
  double chosen_t = tune_temperature(
      cfg.t_candidates, [&](double) { return losses[call++]; });

  InverseModel start = base;
  std::size_t epochs = cfg.ubl_epochs;
  if (cfg.ubl_from_scratch) {
    Rng init_rng(mix_seed(seed, 7771), stream::kInit);
    TrainConfig fresh = cfg;
    fresh.mode = TrainMode::kProbabilistic;
    start = init_inverse_model(model_config_from(fresh, ds), init_rng);
    epochs = cfg.epochs;
  }
  TrainResult r = train_loop(cfg, ds, seed, 1, std::move(start), &pw, chosen_t,
                             epochs);
  UblResult out;
  out.model = std::move(r.model);
  out.weights = pw;
  out.chosen_t = chosen_t;
  out.history = std::move(r.history);
  out.diverged = r.diverged;
  return out;
}

namespace {

Tensor forward_step_matrix(const EntityDataset& ds, const Tensor& statics,
                           const std::vector<std::size_t>& entities,
                           const std::vector<std::size_t>& starts,
                           std::size_t t) {
  std::size_t dx = ds.num_drivers();
  std::size_t dz = statics.shape()[1];
  Tensor out({entities.size(), dx + dz});
  for (std::size_t r = 0; r < entities.size(); ++r) {
    const Entity& e = ds.entities[entities[r]];
    for (std::size_t d = 0; d < dx; ++d) {
      out.at(r, d) = e.drivers.at(starts[r] + t, d);
    }
    for (std::size_t j = 0; j < dz; ++j) {
      out.at(r, dx + j) = statics.at(entities[r], j);
    }
  }
  return out;
}

double forward_val_mse(const ForwardModel& model, const EntityDataset& ds,
                       const Tensor& statics, const TrainConfig& cfg,
                       std::uint64_t eff) {
  Rng val_rng(eff, stream::kValSampler);
  std::size_t L = std::min(cfg.forward_window, ds.val_end - ds.train_end);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < cfg.val_batches; ++b) {
    std::vector<std::size_t> entities(cfg.batch_size), starts(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      entities[i] = val_rng.index(ds.entities.size());
      starts[i] = ds.train_end + val_rng.index(ds.val_end - ds.train_end - L + 1);
    }
    ad::Tape tape;
    graph::BoundForwardModel bound(tape, model);
    std::vector<Tensor> steps;
    steps.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
      steps.push_back(forward_step_matrix(ds, statics, entities, starts, t));
    }
    auto preds = bound.predict(steps);
    for (std::size_t t = 0; t < L; ++t) {
      const Tensor& p = tape.value(preds[t]);
      for (std::size_t r = 0; r < entities.size(); ++r) {
        double y = ds.entities[entities[r]].response[starts[r] + t];
        double d = p.at(r, 0) - y;
        total += d * d;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

ForwardRun train_forward_single(const TrainConfig& cfg, const EntityDataset& ds,
                                const Tensor& statics, std::uint64_t seed) {
  if (!ds.normalized) {
    throw ContractError("dataset must be split and normalized before training");
  }
  if (statics.rank() != 2 || statics.shape()[0] != ds.entities.size()) {
    throw ContractError("train_forward: statics must be (N, |z|)");
  }
  std::uint64_t eff = mix_seed(seed, 8880);
  Rng init_rng(eff, stream::kInit);
  Rng sampler(eff, stream::kSampler);
  std::size_t dx = ds.num_drivers();
  std::size_t dz = statics.shape()[1];
  ForwardRun run;
  run.model = init_forward_model(dx + dz, cfg.forward_hidden, init_rng);
  Adam opt(cfg.adam);
  std::size_t L = cfg.forward_window;
  if (ds.train_end < L) {
    throw ContractError("train span shorter than the forward window");
  }

  ForwardModel best = run.model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> pool(ds.entities.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  std::size_t pool_pos = pool.size();

  for (std::size_t epoch = 0; epoch < cfg.forward_epochs; ++epoch) {
    auto start_time = std::chrono::steady_clock::now();
    EpochStats es;
    bool diverged = false;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<std::size_t> entities(cfg.batch_size), starts(cfg.batch_size);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        if (pool_pos >= pool.size()) {
          for (std::size_t k = pool.size(); k > 1; --k) {
            std::size_t j = sampler.index(k);
            std::swap(pool[k - 1], pool[j]);
          }
          pool_pos = 0;
        }
        entities[i] = pool[pool_pos++];
        starts[i] = sampler.index(ds.train_end - L + 1);
      }
      try {
        ad::Tape tape;
        graph::BoundForwardModel bound(tape, run.model);
        std::vector<Tensor> steps;
        steps.reserve(L);
        for (std::size_t t = 0; t < L; ++t) {
          steps.push_back(forward_step_matrix(ds, statics, entities, starts, t));
        }
        auto preds = bound.predict(steps);
        ad::Value acc;
        for (std::size_t t = 0; t < L; ++t) {
          Tensor target({cfg.batch_size, 1});
          for (std::size_t r = 0; r < cfg.batch_size; ++r) {
            target.at(r, 0) = ds.entities[entities[r]].response[starts[r] + t];
          }
          ad::Value sq =
              tape.sum(tape.square(tape.sub(preds[t], tape.constant(target))));
          acc = t == 0 ? sq : tape.add(acc, sq);
        }
        ad::Value loss = tape.scalar_mul(
            acc, 1.0 / static_cast<double>(L * cfg.batch_size));
        es.train_total += tape.value(loss).item();
        tape.backward(loss);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, v] : bound.bound_params()) {
          grads[name] = tape.grad(v);
        }
        clip_global_norm(grads, cfg.clip_norm);
        std::vector<std::pair<std::string, Tensor*>> params;
        for_each_param(run.model, [&](const std::string& name, Tensor& t) {
          params.emplace_back(name, &t);
        });
        opt.step(params, grads);
      } catch (const NumericError&) {
        diverged = true;
        break;
      }
    }
    es.train_total /= static_cast<double>(cfg.steps_per_epoch);
    if (diverged) {
      run.history.epochs.push_back(es);
      run.history.diverged = true;
      run.diverged = true;
      break;
    }
    es.val_total = forward_val_mse(run.model, ds, statics, cfg, eff);
    es.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start_time)
                    .count();
    if (es.val_total < best_val) {
      best_val = es.val_total;
      best = run.model;
      run.history.best_epoch = run.history.epochs.size();
      since_best = 0;
      es.best = true;
    } else {
      ++since_best;
    }
    run.history.epochs.push_back(es);
    if (since_best >= cfg.patience) break;
  }
  run.model = best;

  // Test evaluation: one continuous pass per entity with a spin-up lead-in,
  // chunked to keep tapes small.
  std::size_t n = ds.entities.size();
  std::size_t spin_start =
      ds.val_end >= cfg.forward_spinup ? ds.val_end - cfg.forward_spinup : 0;
  std::size_t total_days = ds.days() - spin_start;
  std::vector<std::size_t> all_entities(n);
  for (std::size_t i = 0; i < n; ++i) all_entities[i] = i;
  std::vector<std::size_t> origin(n, spin_start);

  run.test_predictions.assign(n, {});
  Tensor h, c;
  const Tensor* hp = nullptr;
  const Tensor* cp = nullptr;
  constexpr std::size_t kChunk = 365;
  for (std::size_t off = 0; off < total_days; off += kChunk) {
    std::size_t len = std::min(kChunk, total_days - off);
    ad::Tape tape;
    graph::BoundForwardModel bound(tape, run.model);
    std::vector<Tensor> steps;
    steps.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      steps.push_back(forward_step_matrix(ds, statics, all_entities, origin,
                                          off + t));
    }
    auto preds = bound.predict(steps, hp, cp, &h, &c);
    hp = &h;
    cp = &c;
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t day = spin_start + off + t;
      if (day < ds.val_end) continue;  // spin-up days are not scored
      const Tensor& p = tape.value(preds[t]);
      for (std::size_t r = 0; r < n; ++r) {
        run.test_predictions[r].push_back(p.at(r, 0));
      }
    }
  }

  run.per_entity_nse.resize(n);
  double nse_sum = 0.0;
  std::size_t nse_count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> obs(ds.entities[r].response.begin() +
                                static_cast<long>(ds.val_end),
                            ds.entities[r].response.end());
    run.per_entity_nse[r] = nse(run.test_predictions[r], obs);
    if (run.per_entity_nse[r]) {
      nse_sum += *run.per_entity_nse[r];
      ++nse_count;
    }
  }
  run.mean_nse = nse_count > 0 ? nse_sum / static_cast<double>(nse_count)
                               : std::numeric_limits<double>::quiet_NaN();
  return run;
}

ForwardEnsemble train_forward(const TrainConfig& cfg, const EntityDataset& ds,
                              const Tensor& statics) {
  ForwardEnsemble ens;
  ens.runs.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), [&](std::size_t i) {
    ens.runs[i] = train_forward_single(cfg, ds, statics, cfg.seeds[i]);
  });
  double sum = 0.0;
  for (const ForwardRun& r : ens.runs) sum += r.mean_nse;
  ens.average_nse = sum / static_cast<double>(ens.runs.size());

  std::size_t n = ds.entities.size();
  std::size_t days = ens.runs.front().test_predictions.front().size();
  double nse_sum = 0.0;
  std::size_t nse_count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> avg(days, 0.0);
    for (const ForwardRun& run : ens.runs) {
      for (std::size_t t = 0; t < days; ++t) {
        avg[t] += run.test_predictions[r][t];
      }
    }
    for (double& v : avg) v /= static_cast<double>(ens.runs.size());
    std::vector<double> obs(ds.entities[r].response.begin() +
                                static_cast<long>(ds.val_end),
                            ds.entities[r].response.end());
    auto score = nse(avg, obs);
    if (score) {
      nse_sum += *score;
      ++nse_count;
    }
  }
  ens.ensemble_nse = nse_count > 0 ? nse_sum / static_cast<double>(nse_count)
                                   : std::numeric_limits<double>::quiet_NaN();
  return ens;
}

SweepResult robustness_sweep(const TrainConfig& cfg, const EntityDataset& ds,
                             const std::vector<double>& fractions,
                             const std::vector<double>& stds,
                             std::uint64_t seed) {
  if (fractions.empty() || stds.empty()) {
    throw ContractError("robustness_sweep: grids must be non-empty");
  }
  struct Job {
    double fraction, noise_std;
  };
  std::vector<Job> jobs = {{0.0, 0.0}};
  for (double f : fractions) {
    for (double s : stds) jobs.push_back({f, s});
  }
  std::vector<SweepCell> cells(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    TrainConfig cell_cfg = cfg;
    cell_cfg.noise_fraction = jobs[i].fraction;
    cell_cfg.noise_std = jobs[i].noise_std;
    TrainResult r = train_inverse(cell_cfg, ds, seed);
    SweepCell cell;
    cell.fraction = jobs[i].fraction;
    cell.noise_std = jobs[i].noise_std;
    cell.diverged = r.diverged;
    auto [tb, te] = span_bounds(ds, Span::kTest);
    cell.recon_mse = reconstruction_mse(r.model, ds, tb, te, cfg.window);
    Tensor point =
        predict_static_windows(r.model, ds, tb, te, cfg.window, nullptr);
    Tensor z = ds.static_matrix();
    double acc = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      double d = z[k] - point[k];
      acc += d * d;
    }
    cell.static_mse = acc / static_cast<double>(z.size());
    McStats mc = epistemic_uncertainty(r.model, ds, tb, te, cfg.window,
                                       cfg.k_mc, mix_seed(seed, 4243));
    double epi = 0.0;
    for (std::size_t k = 0; k < mc.std.size(); ++k) epi += mc.std[k];
    cell.epistemic_mean = epi / static_cast<double>(mc.std.size());
    cells[i] = cell;
  });
  SweepResult out;
  out.clean = cells.front();
  out.cells.assign(cells.begin() + 1, cells.end());
  return out;
}

}  // namespace invbasin
