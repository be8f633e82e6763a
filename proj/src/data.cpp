#include "invbasin/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "invbasin/errors.hpp"

namespace invbasin {

namespace {

// Civil-date serial arithmetic (days since 1970-01-01).
long days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long yy = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

long parse_date(const std::string& s) {
  int y;
  unsigned m, d;
  if (std::sscanf(s.c_str(), "%d-%u-%u", &y, &m, &d) != 3 || m < 1 || m > 12 ||
      d < 1 || d > 31) {
    throw DataError("unparseable ISO date '" + s + "'");
  }
  return days_from_civil(y, m, d);
}

std::string format_date(long serial) {
  int y;
  unsigned m, d;
  civil_from_days(serial, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("unparseable number '" + s + "' in " + context);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  *header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
    if (rows.back().size() != header->size()) {
      throw DataError("'" + path + "' row " + std::to_string(rows.size()) +
                      " has " + std::to_string(rows.back().size()) +
                      " fields, header has " + std::to_string(header->size()));
    }
  }
  return rows;
}

}  // namespace

Tensor EntityDataset::static_matrix() const {
  Tensor z({entities.size(), num_statics()});
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (std::size_t j = 0; j < num_statics(); ++j) {
      z.at(i, j) = entities[i].statics[j];
    }
  }
  return z;
}

std::vector<double> simulate_response(const Tensor& drivers,
                                      const std::vector<double>& statics) {
  if (drivers.rank() != 2 || drivers.shape()[1] != 2 || statics.size() != 4) {
    throw ContractError(
        "simulate_response: drivers must be (T, 2) with 4 statics");
  }
  double runoff = statics[0], recession = statics[1];
  double baseflow = statics[2], et = statics[3];
  std::size_t days = drivers.shape()[0];
  std::vector<double> y(days);
  double storage = 0.0;
  for (std::size_t t = 0; t < days; ++t) {
    double effective = std::max(
        0.0, drivers.at(t, 0) - 0.1 * et * std::max(0.0, drivers.at(t, 1)));
    y[t] = runoff * effective + recession * storage + baseflow;
    storage = (1.0 - recession) * storage + (1.0 - runoff) * effective;
  }
  return y;
}

EntityDataset generate_synthetic(std::size_t n_entities, std::size_t days,
                                 std::uint64_t seed,
                                 const SyntheticOptions& opts) {
  if (n_entities < 2 || days < 730) {
    throw ContractError(
        "generate_synthetic: need at least 2 entities and 730 days");
  }
  EntityDataset ds;
  ds.driver_names = {"precip", "temp"};
  ds.static_names = {"runoff_coeff", "recession_rate", "baseflow",
                     "et_factor"};
  Rng rng(seed);
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::size_t e = 0; e < n_entities; ++e) {
    Entity ent;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "basin_%03zu", e);
    ent.id = buf;
    double z1 = rng.uniform(0.2, 0.9);   // runoff coefficient
    double z2 = rng.uniform(0.05, 0.5);  // recession rate
    double z3 = rng.uniform(0.0, 0.5);   // baseflow
    double z4 = rng.uniform(0.0, 0.3);   // evapotranspiration factor
    ent.statics = {z1, z2, z3, z4};
    double amp = rng.uniform(1.0, 3.0);
    double phase = rng.uniform(0.0, kTwoPi);

    ent.drivers = Tensor({days, 2});
    for (std::size_t t = 0; t < days; ++t) {
      double season = kTwoPi * static_cast<double>(t + 1) / 365.0;
      double xi = opts.forcing_noise ? rng.normal(0.0, 1.0) : 0.0;
      double eta = opts.forcing_noise ? rng.normal(0.0, 0.5) : 0.0;
      ent.drivers.at(t, 0) = std::max(0.0, amp * std::sin(season) + xi);
      ent.drivers.at(t, 1) = 15.0 + 10.0 * std::sin(season - phase) + eta;
    }
    ent.response = simulate_response(ent.drivers, ent.statics);
    ds.entities.push_back(std::move(ent));
  }
  return ds;
}

void save_csv(const EntityDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  long start = parse_date(ds.start_date);

  std::ofstream drivers(fs::path(dir) / "drivers.csv");
  std::ofstream response(fs::path(dir) / "response.csv");
  std::ofstream statics(fs::path(dir) / "statics.csv");
  if (!drivers || !response || !statics) {
    throw IoError("cannot write dataset files under '" + dir + "'");
  }

  drivers << "entity_id,date";
  for (const auto& n : ds.driver_names) drivers << "," << n;
  drivers << "\n";
  response << "entity_id,date,streamflow\n";
  statics << "entity_id";
  for (const auto& n : ds.static_names) statics << "," << n;
  statics << "\n";

  for (const Entity& e : ds.entities) {
    for (std::size_t t = 0; t < e.response.size(); ++t) {
      std::string date = format_date(start + static_cast<long>(t));
      drivers << e.id << "," << date;
      for (std::size_t d = 0; d < ds.num_drivers(); ++d) {
        drivers << "," << format_double(e.drivers.at(t, d));
      }
      drivers << "\n";
      response << e.id << "," << date << "," << format_double(e.response[t])
               << "\n";
    }
    statics << e.id;
    for (double z : e.statics) statics << "," << format_double(z);
    statics << "\n";
  }
}

namespace {

struct SeriesRows {
  // date serial -> values
  std::vector<std::pair<long, std::vector<double>>> rows;
};

// Groups per-entity rows, sorts by date, and validates contiguity.
std::map<std::string, SeriesRows> collect_series(
    const std::vector<std::vector<std::string>>& rows, std::size_t value_cols,
    const std::string& path) {
  std::map<std::string, SeriesRows> by_entity;
  for (const auto& r : rows) {
    long serial = parse_date(r[1]);
    std::vector<double> vals(value_cols);
    for (std::size_t c = 0; c < value_cols; ++c) {
      vals[c] = parse_double(r[2 + c], path);
    }
    by_entity[r[0]].rows.emplace_back(serial, std::move(vals));
  }
  for (auto& [id, series] : by_entity) {
    std::sort(series.rows.begin(), series.rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < series.rows.size(); ++i) {
      long gap = series.rows[i].first - series.rows[i - 1].first;
      if (gap == 0) {
        throw DataError("duplicate (entity, date) row for '" + id + "' in " +
                        path);
      }
      if (gap != 1) {
        throw DataError("date gap for entity '" + id + "' in " + path +
                        " near " + format_date(series.rows[i - 1].first));
      }
    }
  }
  return by_entity;
}

}  // namespace

EntityDataset load_csv(const std::string& driver_path,
                       const std::string& response_path,
                       const std::string& static_path) {
  std::vector<std::string> dh, rh, sh;
  auto drows = read_csv(driver_path, &dh);
  auto rrows = read_csv(response_path, &rh);
  auto srows = read_csv(static_path, &sh);

  if (dh.size() < 3 || dh[0] != "entity_id" || dh[1] != "date") {
    throw DataError("drivers.csv must start with entity_id,date");
  }
  if (rh.size() != 3 || rh[0] != "entity_id" || rh[1] != "date") {
    throw DataError("response.csv must be entity_id,date,<response>");
  }
  if (sh.size() < 2 || sh[0] != "entity_id") {
    throw DataError("statics.csv must start with entity_id");
  }

  EntityDataset ds;
  ds.driver_names.assign(dh.begin() + 2, dh.end());
  ds.static_names.assign(sh.begin() + 1, sh.end());

  auto drivers = collect_series(drows, ds.driver_names.size(), driver_path);
  auto responses = collect_series(rrows, 1, response_path);
  std::map<std::string, std::vector<double>> statics;
  for (const auto& r : srows) {
    if (statics.count(r[0])) {
      throw DataError("duplicate entity '" + r[0] + "' in " + static_path);
    }
    std::vector<double> vals(ds.static_names.size());
    for (std::size_t c = 0; c < vals.size(); ++c) {
      vals[c] = parse_double(r[1 + c], static_path);
    }
    statics[r[0]] = std::move(vals);
  }

  // Entity order: first appearance in drivers.csv.
  std::vector<std::string> order;
  for (const auto& r : drows) {
    if (std::find(order.begin(), order.end(), r[0]) == order.end()) {
      order.push_back(r[0]);
    }
  }

  std::optional<long> t0;
  std::optional<std::size_t> t_len;
  for (const std::string& id : order) {
    if (!responses.count(id) || !statics.count(id)) {
      std::cerr << "warning: entity '" << id
                << "' missing response or statics, dropped\n";
      continue;
    }
    const SeriesRows& dse = drivers.at(id);
    const SeriesRows& rse = responses.at(id);
    if (dse.rows.size() != rse.rows.size() ||
        dse.rows.front().first != rse.rows.front().first) {
      throw DataError("driver and response dates disagree for '" + id + "'");
    }
    if (!t0) {
      t0 = dse.rows.front().first;
      t_len = dse.rows.size();
    } else if (*t0 != dse.rows.front().first || *t_len != dse.rows.size()) {
      throw DataError("entities do not share a common date range ('" + id +
                      "')");
    }
    Entity e;
    e.id = id;
    e.drivers = Tensor({dse.rows.size(), ds.driver_names.size()});
    e.response.resize(rse.rows.size());
    for (std::size_t t = 0; t < dse.rows.size(); ++t) {
      for (std::size_t c = 0; c < ds.driver_names.size(); ++c) {
        e.drivers.at(t, c) = dse.rows[t].second[c];
      }
      e.response[t] = rse.rows[t].second[0];
    }
    e.statics = statics.at(id);
    ds.entities.push_back(std::move(e));
  }
  if (ds.entities.empty()) {
    throw DataError("no complete entities after joining the three files");
  }
  ds.start_date = format_date(*t0);
  return ds;
}

EntityDataset load_csv_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  return load_csv((fs::path(dir) / "drivers.csv").string(),
                  (fs::path(dir) / "response.csv").string(),
                  (fs::path(dir) / "statics.csv").string());
}

void split_and_normalize(EntityDataset& ds, std::size_t train_end,
                         std::size_t val_end) {
  if (ds.normalized) {
    throw ContractError("dataset is already normalized");
  }
  std::size_t T = ds.days();
  if (!(train_end > 0 && train_end < val_end && val_end < T)) {
    throw ContractError("split must satisfy 0 < train_end < val_end < T");
  }
  std::size_t dx = ds.num_drivers();
  std::size_t channels = dx + 1;
  std::size_t n = ds.entities.size();

  ds.norm.channel_mean.assign(channels, 0.0);
  ds.norm.channel_std.assign(channels, 0.0);
  double count = static_cast<double>(n * train_end);
  for (const Entity& e : ds.entities) {
    for (std::size_t t = 0; t < train_end; ++t) {
      for (std::size_t c = 0; c < dx; ++c) {
        ds.norm.channel_mean[c] += e.drivers.at(t, c);
      }
      ds.norm.channel_mean[dx] += e.response[t];
    }
  }
  for (double& m : ds.norm.channel_mean) m /= count;
  for (const Entity& e : ds.entities) {
    for (std::size_t t = 0; t < train_end; ++t) {
      for (std::size_t c = 0; c < dx; ++c) {
        double d = e.drivers.at(t, c) - ds.norm.channel_mean[c];
        ds.norm.channel_std[c] += d * d;
      }
      double d = e.response[t] - ds.norm.channel_mean[dx];
      ds.norm.channel_std[dx] += d * d;
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    ds.norm.channel_std[c] = std::sqrt(ds.norm.channel_std[c] / count);
    if (ds.norm.channel_std[c] < 1e-12) {
      std::string name = c < dx ? ds.driver_names[c] : "response";
      throw DataError("channel '" + name + "' has zero variance on the train span");
    }
  }

  std::size_t dz = ds.num_statics();
  ds.norm.static_mean.assign(dz, 0.0);
  ds.norm.static_std.assign(dz, 0.0);
  for (const Entity& e : ds.entities) {
    for (std::size_t j = 0; j < dz; ++j) ds.norm.static_mean[j] += e.statics[j];
  }
  for (double& m : ds.norm.static_mean) m /= static_cast<double>(n);
  for (const Entity& e : ds.entities) {
    for (std::size_t j = 0; j < dz; ++j) {
      double d = e.statics[j] - ds.norm.static_mean[j];
      ds.norm.static_std[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dz; ++j) {
    ds.norm.static_std[j] =
        std::sqrt(ds.norm.static_std[j] / static_cast<double>(n));
    if (ds.norm.static_std[j] < 1e-12) {
      throw DataError("static '" + ds.static_names[j] +
                      "' has zero variance across entities");
    }
  }

  for (Entity& e : ds.entities) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < dx; ++c) {
        e.drivers.at(t, c) = (e.drivers.at(t, c) - ds.norm.channel_mean[c]) /
                             ds.norm.channel_std[c];
      }
      e.response[t] =
          (e.response[t] - ds.norm.channel_mean[dx]) / ds.norm.channel_std[dx];
    }
    for (std::size_t j = 0; j < dz; ++j) {
      e.statics[j] =
          (e.statics[j] - ds.norm.static_mean[j]) / ds.norm.static_std[j];
    }
  }
  ds.train_end = train_end;
  ds.val_end = val_end;
  ds.normalized = true;
}

Tensor SequenceBatch::step_matrix(std::size_t t) const {
  std::size_t b = size();
  std::size_t c = anchors.shape()[2];
  Tensor out({2 * b, c});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      out.at(i, k) = anchors[(i * length + t) * c + k];
      out.at(b + i, k) = positives[(i * length + t) * c + k];
    }
  }
  return out;
}

std::vector<Tensor> SequenceBatch::step_matrices() const {
  std::vector<Tensor> steps;
  steps.reserve(length);
  for (std::size_t t = 0; t < length; ++t) steps.push_back(step_matrix(t));
  return steps;
}

namespace {

void copy_window(const EntityDataset& ds, std::size_t entity, std::size_t start,
                 std::size_t length, Tensor& dest, std::size_t row) {
  const Entity& e = ds.entities[entity];
  std::size_t dx = ds.num_drivers();
  std::size_t c = dx + 1;
  for (std::size_t t = 0; t < length; ++t) {
    double* out = dest.data() + ((row * length) + t) * c;
    for (std::size_t d = 0; d < dx; ++d) out[d] = e.drivers.at(start + t, d);
    out[dx] = e.response[start + t];
  }
}

}  // namespace

SequenceBatch sample_pairs(const EntityDataset& ds, std::size_t span_begin,
                           std::size_t span_end, std::size_t length,
                           std::size_t batch, Rng& rng) {
  if (span_end <= span_begin || span_end > ds.days()) {
    throw ContractError("sample_pairs: invalid span");
  }
  std::size_t span = span_end - span_begin;
  if (span < 2 * length) {
    throw ContractError("sample_pairs: span of " + std::to_string(span) +
                        " days cannot hold two disjoint windows of " +
                        std::to_string(length));
  }
  std::size_t n = ds.entities.size();
  std::size_t c = ds.channels();

  SequenceBatch out;
  out.length = length;
  out.anchors = Tensor({batch, length, c});
  out.positives = Tensor({batch, length, c});
  out.statics = Tensor({batch, ds.num_statics()});
  out.entity_index.resize(batch);

  // Entities drawn without replacement within a batch (reshuffled whenever
  // the pool is exhausted) so negatives come from distinct entities.
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::size_t pool_pos = n;  // trigger reshuffle on first use

  std::size_t max_start = span - length;  // inclusive, local coordinates
  for (std::size_t b = 0; b < batch; ++b) {
    if (pool_pos >= n) {
      for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.index(i);
        std::swap(pool[i - 1], pool[j]);
      }
      pool_pos = 0;
    }
    std::size_t entity = pool[pool_pos++];
    out.entity_index[b] = entity;

    std::size_t a = 0;
    std::size_t left = 0, right = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      a = rng.index(max_start + 1);
      left = a >= length ? a - length + 1 : 0;
      right = max_start >= a + length ? max_start - (a + length) + 1 : 0;
      if (left + right > 0) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      a = 0;
      left = 0;
      right = max_start >= length ? max_start - length + 1 : 1;
    }
    std::size_t pick = rng.index(left + right);
    std::size_t s2 = pick < left ? pick : a + length + (pick - left);

    copy_window(ds, entity, span_begin + a, length, out.anchors, b);
    copy_window(ds, entity, span_begin + s2, length, out.positives, b);
    std::size_t gap = a > s2 ? a - s2 : s2 - a;
    if (gap < length) {
      throw ContractError("sample_pairs: internal overlap bug");
    }
    for (std::size_t j = 0; j < ds.num_statics(); ++j) {
      out.statics.at(b, j) = ds.entities[entity].statics[j];
    }
  }
  return out;
}

SequenceBatch sample_positive_pairs(const EntityDataset& ds,
                                    std::size_t length, std::size_t batch,
                                    Rng& rng) {
  return sample_pairs(ds, 0, ds.train_end, length, batch, rng);
}

NoiseGate::NoiseGate(const NoiseSpec& spec, std::size_t total_windows)
    : spec_(spec) {
  if (spec.fraction < 0.0 || spec.fraction > 1.0 || spec.std < 0.0) {
    throw ConfigError("noise: fraction must be in [0,1] and std >= 0");
  }
  std::size_t k = static_cast<std::size_t>(
      std::llround(spec.fraction * static_cast<double>(total_windows)));
  if (k == 0 || spec.std == 0.0 || total_windows == 0) return;
  selected_.assign(total_windows, false);
  std::vector<std::size_t> idx(total_windows);
  for (std::size_t i = 0; i < total_windows; ++i) idx[i] = i;
  Rng rng(spec.seed, stream::kNoise);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.index(total_windows - i);
    std::swap(idx[i], idx[j]);
    selected_[idx[i]] = true;
  }
  active_ = true;
}

std::size_t NoiseGate::selected_count() const {
  std::size_t k = 0;
  for (bool b : selected_) k += b ? 1 : 0;
  return k;
}

void NoiseGate::perturb(Tensor& windows, std::size_t row,
                        std::size_t position) const {
  Rng rng(mix_seed(spec_.seed, stream::kNoise),
          static_cast<std::uint64_t>(position) + 1);
  std::size_t per_window = windows.shape()[1] * windows.shape()[2];
  double* data = windows.data() + row * per_window;
  for (std::size_t i = 0; i < per_window; ++i) {
    data[i] += rng.normal(0.0, spec_.std);
  }
}

void NoiseGate::apply(SequenceBatch& batch) {
  std::size_t b = batch.size();
  if (!active_) {
    cursor_ += 2 * b;
    return;
  }
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t anchor_pos = cursor_ + i;
    std::size_t positive_pos = cursor_ + b + i;
    if (anchor_pos < selected_.size() && selected_[anchor_pos]) {
      perturb(batch.anchors, i, anchor_pos);
    }
    if (positive_pos < selected_.size() && selected_[positive_pos]) {
      perturb(batch.positives, i, positive_pos);
    }
  }
  cursor_ += 2 * b;
}

}  // namespace invbasin
