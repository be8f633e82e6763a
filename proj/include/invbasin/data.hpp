// Entity datasets: synthetic generation from a known storage-discharge
// process, CAMELS-shaped CSV ingestion, train-span normalization, temporal
// splits, positive-pair window sampling and training-noise injection.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "invbasin/rng.hpp"
#include "invbasin/tensor.hpp"

namespace invbasin {

struct Entity {
  std::string id;
  Tensor drivers;                // (T, Dx)
  std::vector<double> response;  // T
  std::vector<double> statics;   // |z|
};

struct NormStats {
  std::vector<double> channel_mean, channel_std;  // Dx drivers then response
  std::vector<double> static_mean, static_std;
};

struct EntityDataset {
  std::vector<Entity> entities;
  std::vector<std::string> driver_names;
  std::vector<std::string> static_names;
  std::string start_date = "1980-01-01";

  // Temporal split: [0, train_end) / [train_end, val_end) / [val_end, T).
  std::size_t train_end = 0;
  std::size_t val_end = 0;

  NormStats norm;
  bool normalized = false;

  std::size_t days() const {
    return entities.empty() ? 0 : entities.front().response.size();
  }
  std::size_t num_drivers() const { return driver_names.size(); }
  std::size_t num_statics() const { return static_names.size(); }
  std::size_t channels() const { return num_drivers() + 1; }

  // True statics as an (N, |z|) matrix.
  Tensor static_matrix() const;
};

// Synthetic basins driven by seasonal precipitation/temperature forcings
// through a linear-reservoir response with four statics: runoff coefficient,
// recession rate, baseflow, and an evapotranspiration factor.
struct SyntheticOptions {
  bool forcing_noise = true;  // test hook: disable the forcing noise terms
};

EntityDataset generate_synthetic(std::size_t n_entities, std::size_t days,
                                 std::uint64_t seed,
                                 const SyntheticOptions& opts = {});

// The storage-discharge process behind the generator, for given forcings
// [precip, temp] and statics {runoff_coeff, recession_rate, baseflow,
// et_factor}:
//   effective_t = max(0, precip_t - 0.1 * et * max(0, temp_t))
//   y_t         = runoff * effective_t + recession * storage_{t-1} + baseflow
//   storage_t   = (1 - recession) * storage_{t-1} + (1 - runoff) * effective_t
std::vector<double> simulate_response(const Tensor& drivers,
                                      const std::vector<double>& statics);

// drivers.csv / response.csv / statics.csv, with ISO dates.
void save_csv(const EntityDataset& ds, const std::string& dir);
EntityDataset load_csv(const std::string& driver_path,
                       const std::string& response_path,
                       const std::string& static_path);
EntityDataset load_csv_dir(const std::string& dir);

// Z-scores every channel with statistics from the train span only and the
// statics across entities; errors on zero-variance channels.
void split_and_normalize(EntityDataset& ds, std::size_t train_end,
                         std::size_t val_end);

struct SequenceBatch {
  Tensor anchors;    // (B, L, channels)
  Tensor positives;  // (B, L, channels)
  Tensor statics;    // (B, |z|)
  std::vector<std::size_t> entity_index;
  std::size_t length = 0;

  std::size_t size() const { return entity_index.size(); }
  // Step matrix of 2B rows (anchors stacked over positives) at offset t.
  Tensor step_matrix(std::size_t t) const;
  std::vector<Tensor> step_matrices() const;
};

// Two non-overlapping L-day windows per item from the given span; entities
// are drawn without replacement within a batch so contrastive negatives
// come from other entities.
SequenceBatch sample_pairs(const EntityDataset& ds, std::size_t span_begin,
                           std::size_t span_end, std::size_t length,
                           std::size_t batch, Rng& rng);

// Train-span form used during training.
SequenceBatch sample_positive_pairs(const EntityDataset& ds,
                                    std::size_t length, std::size_t batch,
                                    Rng& rng);

struct NoiseSpec {
  double fraction = 0.0;  // share of training windows perturbed
  double std = 0.0;       // Gaussian scale, in normalized units
  std::uint64_t seed = 0;
};

// Marks exactly round(fraction * total_windows) stream positions for
// perturbation; each marked window gets i.i.d. N(0, std^2) added to every
// channel. Noise draws depend only on (seed, window position), so a given
// window stream perturbs identically regardless of batching.
class NoiseGate {
 public:
  NoiseGate(const NoiseSpec& spec, std::size_t total_windows);

  bool active() const { return active_; }
  std::size_t selected_count() const;

  // Consumes 2 * batch.size() stream positions (anchors then positives).
  void apply(SequenceBatch& batch);

 private:
  void perturb(Tensor& windows, std::size_t row, std::size_t position) const;

  NoiseSpec spec_;
  bool active_ = false;
  std::vector<bool> selected_;
  std::size_t cursor_ = 0;
};

}  // namespace invbasin
