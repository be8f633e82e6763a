#include "invbasin/evaluate.hpp"

#include <cmath>

#include "invbasin/errors.hpp"

namespace invbasin {

namespace {

constexpr std::size_t kChunkRows = 64;

struct WindowRef {
  std::size_t entity;
  std::size_t start;
};

std::vector<WindowRef> list_windows(const EntityDataset& ds,
                                    std::size_t span_begin,
                                    std::size_t span_end, std::size_t window) {
  if (span_end <= span_begin || window == 0 ||
      span_end - span_begin < window) {
    throw ContractError("evaluation span shorter than one window");
  }
  std::size_t per_entity = (span_end - span_begin) / window;
  std::vector<WindowRef> refs;
  refs.reserve(ds.entities.size() * per_entity);
  for (std::size_t e = 0; e < ds.entities.size(); ++e) {
    for (std::size_t w = 0; w < per_entity; ++w) {
      refs.push_back({e, span_begin + w * window});
    }
  }
  return refs;
}

Tensor window_step(const EntityDataset& ds, const std::vector<WindowRef>& refs,
                   std::size_t first, std::size_t count, std::size_t t) {
  std::size_t dx = ds.num_drivers();
  Tensor out({count, dx + 1});
  for (std::size_t r = 0; r < count; ++r) {
    const WindowRef& ref = refs[first + r];
    const Entity& e = ds.entities[ref.entity];
    for (std::size_t d = 0; d < dx; ++d) {
      out.at(r, d) = e.drivers.at(ref.start + t, d);
    }
    out.at(r, dx) = e.response[ref.start + t];
  }
  return out;
}

}  // namespace

std::pair<std::size_t, std::size_t> span_bounds(const EntityDataset& ds,
                                                Span span) {
  switch (span) {
    case Span::kTrain: return {0, ds.train_end};
    case Span::kVal: return {ds.train_end, ds.val_end};
    case Span::kTest: return {ds.val_end, ds.days()};
  }
  return {0, 0};
}

Tensor predict_static_windows(const InverseModel& model,
                              const EntityDataset& ds, std::size_t span_begin,
                              std::size_t span_end, std::size_t window,
                              const BbbNoise* noise,
                              std::vector<Tensor>* per_window) {
  auto refs = list_windows(ds, span_begin, span_end, window);
  std::size_t n = ds.entities.size();
  std::size_t dz = ds.num_statics();
  std::size_t per_entity = refs.size() / n;

  std::vector<Tensor> window_preds(per_entity, Tensor({n, dz}));
  for (std::size_t first = 0; first < refs.size(); first += kChunkRows) {
    std::size_t count = std::min(kChunkRows, refs.size() - first);
    ad::Tape tape;
    graph::BoundInverseModel bound(tape, model, noise);
    std::vector<Tensor> steps;
    steps.reserve(window);
    for (std::size_t t = 0; t < window; ++t) {
      steps.push_back(window_step(ds, refs, first, count, t));
    }
    ad::Value emb = bound.encode(steps);
    Tensor zhat = tape.value(bound.static_head(emb));
    for (std::size_t r = 0; r < count; ++r) {
      const WindowRef& ref = refs[first + r];
      std::size_t w = (ref.start - span_begin) / window;
      for (std::size_t j = 0; j < dz; ++j) {
        window_preds[w].at(ref.entity, j) = zhat.at(r, j);
      }
    }
  }

  Tensor mean({n, dz});
  for (const Tensor& wp : window_preds) {
    for (std::size_t i = 0; i < wp.size(); ++i) mean[i] += wp[i];
  }
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] /= static_cast<double>(per_entity);
  }
  if (per_window != nullptr) *per_window = std::move(window_preds);
  return mean;
}

double reconstruction_mse(const InverseModel& model, const EntityDataset& ds,
                          std::size_t span_begin, std::size_t span_end,
                          std::size_t window) {
  auto refs = list_windows(ds, span_begin, span_end, window);
  double total = 0.0;
  std::size_t cells = 0;
  for (std::size_t first = 0; first < refs.size(); first += kChunkRows) {
    std::size_t count = std::min(kChunkRows, refs.size() - first);
    ad::Tape tape;
    graph::BoundInverseModel bound(tape, model, nullptr);
    std::vector<Tensor> steps;
    steps.reserve(window);
    for (std::size_t t = 0; t < window; ++t) {
      steps.push_back(window_step(ds, refs, first, count, t));
    }
    ad::Value emb = bound.encode(steps);
    auto recon = bound.decode(emb, window);
    for (std::size_t t = 0; t < window; ++t) {
      const Tensor& r = tape.value(recon[t]);
      for (std::size_t i = 0; i < r.size(); ++i) {
        double d = r[i] - steps[t][i];
        total += d * d;
      }
      cells += r.size();
    }
  }
  return total / static_cast<double>(cells);
}

McStats epistemic_uncertainty(const InverseModel& model,
                              const EntityDataset& ds, std::size_t span_begin,
                              std::size_t span_end, std::size_t window,
                              std::size_t k_mc, std::uint64_t seed) {
  if (!model.probabilistic()) {
    Tensor mean = predict_static_windows(model, ds, span_begin, span_end,
                                         window, nullptr);
    return {mean, Tensor(mean.shape())};
  }
  return mc_mean_std(k_mc, seed, [&](std::size_t, Rng& rng) {
    BbbNoise noise = draw_bbb_noise(model, rng);
    return predict_static_windows(model, ds, span_begin, span_end, window,
                                  &noise);
  });
}

EvalSummary evaluate_inverse(const InverseModel& model, const EntityDataset& ds,
                             Span span, std::size_t k_mc, std::uint64_t seed,
                             std::size_t window) {
  auto [begin, end] = span_bounds(ds, span);
  EvalSummary s;
  s.feature_names = ds.static_names;
  s.k_mc = k_mc;
  s.window = window;

  std::vector<Tensor> per_window;
  s.point_pred =
      predict_static_windows(model, ds, begin, end, window, nullptr, &per_window);
  s.unc_time = unc_over_time(per_window);

  McStats mc = epistemic_uncertainty(model, ds, begin, end, window, k_mc, seed);
  s.mean_pred = mc.mean;
  s.epistemic = mc.std;

  Tensor z = ds.static_matrix();
  std::size_t n = z.shape()[0];
  std::size_t dz = z.shape()[1];

  s.static_mse_per_feature.assign(dz, 0.0);
  for (std::size_t j = 0; j < dz; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double d = z.at(i, j) - s.point_pred.at(i, j);
      s.static_mse_per_feature[j] += d * d;
    }
    s.static_mse_per_feature[j] /= static_cast<double>(n);
    s.static_mse += s.static_mse_per_feature[j];
  }
  s.static_mse /= static_cast<double>(dz);

  s.static_nse_per_feature.resize(dz);
  double nse_sum = 0.0;
  std::size_t nse_count = 0;
  std::vector<double> obs(n), pred(n);
  for (std::size_t j = 0; j < dz; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      obs[i] = z.at(i, j);
      pred[i] = s.point_pred.at(i, j);
    }
    s.static_nse_per_feature[j] = nse(pred, obs);
    if (s.static_nse_per_feature[j]) {
      nse_sum += *s.static_nse_per_feature[j];
      ++nse_count;
    }
  }
  if (nse_count > 0) s.static_nse = nse_sum / static_cast<double>(nse_count);

  s.coverage_1sd = coverage_rate(z, s.mean_pred, s.epistemic, 1.0);
  s.coverage_2sd = coverage_rate(z, s.mean_pred, s.epistemic, 2.0);
  s.corr_per_feature = per_feature_pearson(s.unc_time, s.epistemic);

  double epi_sum = 0.0, unc_sum = 0.0;
  for (std::size_t i = 0; i < s.epistemic.size(); ++i) {
    epi_sum += s.epistemic[i];
    unc_sum += s.unc_time[i];
  }
  s.epistemic_mean = epi_sum / static_cast<double>(s.epistemic.size());
  s.unc_time_mean = unc_sum / static_cast<double>(s.unc_time.size());

  s.recon_mse = reconstruction_mse(model, ds, begin, end, window);
  return s;
}

}  // namespace invbasin
