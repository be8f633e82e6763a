#include "invbasin/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "invbasin/checkpoint.hpp"
#include "invbasin/config.hpp"
#include "invbasin/evaluate.hpp"
#include "invbasin/training.hpp"

namespace invbasin {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json optional_or_null(const std::optional<double>& v) {
  if (!v.has_value() || !std::isfinite(*v)) return nullptr;
  return *v;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(1) + "\n");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return j;
}

struct RunMeta {
  std::string command;
  std::string data_dir;
  std::uint64_t seed = 0;
  std::string mode;
  std::string placement;
};

void write_run_meta(const fs::path& dir, const RunMeta& meta) {
  json j;
  j["command"] = meta.command;
  j["data_dir"] = meta.data_dir;
  j["seed"] = meta.seed;
  j["mode"] = meta.mode;
  j["placement"] = meta.placement;
  write_json(dir / "run.json", j);
}

RunMeta read_run_meta(const fs::path& dir) {
  json j = read_json(dir / "run.json");
  RunMeta meta;
  meta.command = j.value("command", "");
  meta.data_dir = j.value("data_dir", "");
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.mode = j.value("mode", "");
  meta.placement = j.value("placement", "");
  return meta;
}

EntityDataset load_and_split(const std::string& data_dir,
                             const TrainConfig& cfg) {
  EntityDataset ds = load_csv_dir(data_dir);
  std::size_t t = ds.days();
  auto train_end = static_cast<std::size_t>(cfg.split_train * static_cast<double>(t));
  auto val_end = static_cast<std::size_t>(
      (cfg.split_train + cfg.split_val) * static_cast<double>(t));
  split_and_normalize(ds, train_end, val_end);
  return ds;
}

json eval_to_json(const EvalSummary& s, const EntityDataset& ds) {
  json j;
  j["static_mse"] = s.static_mse;
  j["static_nse"] = optional_or_null(s.static_nse);
  j["epistemic_mean"] = s.epistemic_mean;
  j["unc_time_mean"] = s.unc_time_mean;
  j["coverage_1sd"] = s.coverage_1sd;
  j["coverage_2sd"] = s.coverage_2sd;
  j["recon_mse"] = s.recon_mse;
  j["k_mc"] = s.k_mc;
  j["window"] = s.window;
  json mse_f = json::object(), nse_f = json::object(), corr_f = json::object();
  for (std::size_t f = 0; f < s.feature_names.size(); ++f) {
    mse_f[s.feature_names[f]] = s.static_mse_per_feature[f];
    nse_f[s.feature_names[f]] = optional_or_null(s.static_nse_per_feature[f]);
    corr_f[s.feature_names[f]] = optional_or_null(s.corr_per_feature[f]);
  }
  j["static_mse_per_feature"] = mse_f;
  j["static_nse_per_feature"] = nse_f;
  j["corr_per_feature"] = corr_f;
  json scatter = json::array();
  for (std::size_t i = 0; i < ds.entities.size(); ++i) {
    for (std::size_t f = 0; f < s.feature_names.size(); ++f) {
      json row;
      row["entity"] = ds.entities[i].id;
      row["feature"] = s.feature_names[f];
      row["observed"] = ds.entities[i].statics[f];
      row["predicted"] = s.point_pred.at(i, f);
      row["sigma"] = s.epistemic.at(i, f);
      row["unc_time"] = s.unc_time.at(i, f);
      scatter.push_back(row);
    }
  }
  j["scatter"] = scatter;
  return j;
}

void write_report_csv(const fs::path& path, const json& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "entity,feature,observed,predicted,sigma,unc_time\n";
  char buf[256];
  for (const auto& row : report.at("scatter")) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%.10g,%.10g,%.10g\n",
                  row.at("entity").get<std::string>().c_str(),
                  row.at("feature").get<std::string>().c_str(),
                  row.at("observed").get<double>(),
                  row.at("predicted").get<double>(),
                  row.at("sigma").get<double>(),
                  row.at("unc_time").get<double>());
    out << buf;
  }
}

json history_to_json(const RunHistory& history) {
  json j;
  j["epochs_run"] = history.epochs.size();
  j["best_epoch"] = history.best_epoch;
  j["diverged"] = history.diverged;
  if (!history.epochs.empty()) {
    const EpochStats& best = history.epochs[history.best_epoch];
    j["best_val"] = {{"total", best.val_total}, {"rec", best.val_rec},
                     {"cont", best.val_cont},   {"inv", best.val_inv},
                     {"kl", best.val_kl}};
  }
  return j;
}

// ---------------------------------------------------------------- SVG ----

struct Panel {
  std::string feature;
  std::vector<double> observed, predicted, sigma;
};

std::string scatter_svg(const std::vector<Panel>& panels) {
  const double size = 220, margin = 34, gap = 16;
  std::size_t cols = std::min<std::size_t>(panels.size(), 4);
  std::size_t rows = (panels.size() + cols - 1) / cols;
  double width = static_cast<double>(cols) * (size + gap) + gap;
  double height = static_cast<double>(rows) * (size + gap) + gap;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  char buf[512];
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    double x0 = gap + static_cast<double>(p % cols) * (size + gap);
    double y0 = gap + static_cast<double>(p / cols) * (size + gap);
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < panel.observed.size(); ++i) {
      lo = std::min({lo, panel.observed[i], panel.predicted[i] - panel.sigma[i]});
      hi = std::max({hi, panel.observed[i], panel.predicted[i] + panel.sigma[i]});
    }
    if (lo >= hi) {
      lo -= 1.0;
      hi += 1.0;
    }
    double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto px = [&](double v) {
      return x0 + margin + (v - lo) / (hi - lo) * (size - 2 * margin);
    };
    auto py = [&](double v) {
      return y0 + size - margin - (v - lo) / (hi - lo) * (size - 2 * margin);
    };
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                  "fill=\"white\" stroke=\"#444\"/>\n",
                  x0, y0, size, size);
    svg << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
                  "font-family=\"sans-serif\">%s</text>\n",
                  x0 + 8, y0 + 14, panel.feature.c_str());
    svg << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#222\" stroke-dasharray=\"4,3\"/>\n",
                  px(lo + pad), py(lo + pad), px(hi - pad), py(hi - pad));
    svg << buf;
    for (std::size_t i = 0; i < panel.observed.size(); ++i) {
      double x = px(panel.observed[i]);
      if (panel.sigma[i] > 0) {
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                      "stroke=\"#e6a817\" stroke-width=\"1\"/>\n",
                      x, py(panel.predicted[i] - panel.sigma[i]), x,
                      py(panel.predicted[i] + panel.sigma[i]));
        svg << buf;
      }
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.4\" "
                    "fill=\"#2c6fbb\"/>\n",
                    x, py(panel.predicted[i]));
      svg << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"9\" "
                  "font-family=\"sans-serif\" fill=\"#555\">observed</text>\n",
                  x0 + size / 2 - 20, y0 + size - 6);
    svg << buf;
    std::snprintf(
        buf, sizeof(buf),
        "<text x=\"%.1f\" y=\"%.1f\" font-size=\"9\" font-family=\"sans-serif\" "
        "fill=\"#555\" transform=\"rotate(-90 %.1f %.1f)\">predicted</text>\n",
        x0 + 10, y0 + size / 2 + 20, x0 + 10, y0 + size / 2 + 20);
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_run_scatter_svg(const fs::path& path, const json& report) {
  std::map<std::string, Panel> panels;
  std::vector<std::string> order;
  for (const auto& row : report.at("scatter")) {
    std::string feature = row.at("feature").get<std::string>();
    if (!panels.count(feature)) {
      order.push_back(feature);
      panels[feature].feature = feature;
    }
    Panel& p = panels[feature];
    p.observed.push_back(row.at("observed").get<double>());
    p.predicted.push_back(row.at("predicted").get<double>());
    p.sigma.push_back(row.at("sigma").get<double>());
  }
  std::vector<Panel> ordered;
  ordered.reserve(order.size());
  for (const auto& f : order) ordered.push_back(panels[f]);
  write_text(path, scatter_svg(ordered));
}

// ------------------------------------------------------------ commands ----

struct CommonArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::int64_t seed_override = -1;
};

TrainConfig load_config(const std::string& path, std::string* text_out) {
  if (path.empty()) {
    if (text_out != nullptr) *text_out = default_config_text();
    return TrainConfig{};
  }
  ConfigMap map = ConfigMap::parse_file(path);
  if (text_out != nullptr) *text_out = map.source_text();
  return train_config_from(map);
}

std::uint64_t pick_seed(const TrainConfig& cfg, std::int64_t override_seed) {
  if (override_seed >= 0) return static_cast<std::uint64_t>(override_seed);
  return cfg.seeds.front();
}

int cmd_generate(std::size_t entities, std::size_t days, std::uint64_t seed,
                 const std::string& out) {
  EntityDataset ds = generate_synthetic(entities, days, seed);
  ensure_dir(out);
  save_csv(ds, out);
  std::cout << "wrote " << ds.entities.size() << " entities x " << ds.days()
            << " days to " << out << "\n";
  return 0;
}

// Shared tail for train-inverse and ubl runs: checkpoint, history, report.
int finish_inverse_run(const fs::path& out, const std::string& command,
                       const TrainConfig& cfg, const std::string& cfg_text,
                       const std::string& data_dir, std::uint64_t seed,
                       const EntityDataset& ds, const InverseModel& model,
                       const RunHistory& history, bool diverged,
                       const PenaltyWeights* penalty, double chosen_t) {
  ensure_dir(out);
  write_text(out / "config.toml", cfg_text);
  RunMeta meta;
  meta.command = command;
  meta.data_dir = data_dir;
  meta.seed = seed;
  meta.mode = mode_name(cfg.mode);
  meta.placement = placement_name(model.config.placement);
  write_run_meta(out, meta);

  InverseCheckpoint ckpt;
  ckpt.model = model;
  ckpt.seed = seed;
  ckpt.norm = ds.norm;
  ckpt.driver_names = ds.driver_names;
  ckpt.static_names = ds.static_names;
  save_checkpoint((out / "checkpoint.json").string(), ckpt);
  write_history_csv((out / "history.csv").string(), history);

  EvalSummary summary = evaluate_inverse(model, ds, Span::kTest, cfg.k_mc,
                                         mix_seed(seed, 9001), cfg.window);
  json report = eval_to_json(summary, ds);
  report["command"] = command;
  report["mode"] = meta.mode;
  report["placement"] = meta.placement;
  report["seed"] = seed;
  report["split"] = "test";
  report["history"] = history_to_json(history);
  if (penalty != nullptr) {
    report["penalty"] = {{"feature_names", penalty->feature_names},
                         {"w", penalty->w},
                         {"v", penalty->v},
                         {"lambda1", penalty->lambda1},
                         {"t", chosen_t}};
  }
  write_json(out / "report.json", report);
  write_report_csv(out / "report.csv", report);
  if (diverged) {
    std::cerr << "training diverged; wrote the last finite checkpoint\n";
    return 2;
  }
  std::cout << command << ": static_nse="
            << (summary.static_nse ? std::to_string(*summary.static_nse)
                                   : std::string("n/a"))
            << " static_mse=" << summary.static_mse << " -> " << out.string()
            << "\n";
  return 0;
}

int cmd_train_inverse(const CommonArgs& a) {
  std::string cfg_text;
  TrainConfig cfg = load_config(a.config_path, &cfg_text);
  if (cfg.mode == TrainMode::kUblPhase2) {
    throw ConfigError("train-inverse runs deterministic or probabilistic mode; "
                      "use the ubl subcommand for phase 2");
  }
  std::uint64_t seed = pick_seed(cfg, a.seed_override);
  EntityDataset ds = load_and_split(a.data_dir, cfg);
  TrainResult r = train_inverse(cfg, ds, seed);
  return finish_inverse_run(a.out_dir, "train-inverse", cfg, cfg_text,
                            a.data_dir, seed, ds, r.model, r.history,
                            r.diverged, nullptr, 0.0);
}

int cmd_ubl(const CommonArgs& a, const std::string& base_dir) {
  std::string cfg_text;
  TrainConfig cfg = load_config(a.config_path, &cfg_text);
  std::string data_dir = a.data_dir;
  if (data_dir.empty()) {
    data_dir = read_run_meta(base_dir).data_dir;
  }
  if (data_dir.empty()) {
    throw ConfigError("ubl: no --data given and the base run records none");
  }
  InverseCheckpoint base = load_checkpoint(
      (fs::path(base_dir) / "checkpoint.json").string());
  std::uint64_t seed = a.seed_override >= 0
                           ? static_cast<std::uint64_t>(a.seed_override)
                           : base.seed;
  EntityDataset ds = load_and_split(data_dir, cfg);
  TrainConfig phase2 = cfg;
  phase2.mode = TrainMode::kUblPhase2;
  phase2.placement = base.model.config.placement;
  UblResult u = run_ubl(phase2, base.model, ds, seed);
  return finish_inverse_run(a.out_dir, "ubl", phase2, cfg_text, data_dir, seed,
                            ds, u.model, u.history, u.diverged, &u.weights,
                            u.chosen_t);
}

int cmd_train_forward(const CommonArgs& a, const std::string& statics_source,
                      const std::string& inverse_run) {
  std::string cfg_text;
  TrainConfig cfg = load_config(a.config_path, &cfg_text);
  if (a.seed_override >= 0) {
    cfg.seeds = {static_cast<std::uint64_t>(a.seed_override)};
  }
  EntityDataset ds = load_and_split(a.data_dir, cfg);

  Tensor statics;
  if (statics_source == "observed") {
    statics = ds.static_matrix();
  } else if (statics_source == "reconstructed") {
    if (inverse_run.empty()) {
      throw ConfigError(
          "--statics reconstructed requires --inverse-run RUN_DIR");
    }
    InverseCheckpoint ckpt = load_checkpoint(
        (fs::path(inverse_run) / "checkpoint.json").string());
    auto [tb, te] = span_bounds(ds, Span::kTest);
    statics = predict_static_windows(ckpt.model, ds, tb, te, cfg.window,
                                     nullptr);
  } else {
    throw ConfigError("--statics must be 'observed' or 'reconstructed'");
  }

  ForwardEnsemble ens = train_forward(cfg, ds, statics);
  ensure_dir(a.out_dir);
  write_text(fs::path(a.out_dir) / "config.toml", cfg_text);
  RunMeta meta;
  meta.command = "train-forward";
  meta.data_dir = a.data_dir;
  meta.seed = cfg.seeds.front();
  meta.mode = statics_source;
  write_run_meta(a.out_dir, meta);

  json report;
  report["command"] = "train-forward";
  report["statics_source"] = statics_source;
  report["seeds"] = cfg.seeds;
  report["average_nse"] = finite_or_null(ens.average_nse);
  report["ensemble_nse"] = finite_or_null(ens.ensemble_nse);
  json per_seed = json::array();
  bool any_diverged = false;
  for (std::size_t i = 0; i < ens.runs.size(); ++i) {
    const ForwardRun& run = ens.runs[i];
    any_diverged = any_diverged || run.diverged;
    json entry;
    entry["seed"] = cfg.seeds[i];
    entry["mean_nse"] = finite_or_null(run.mean_nse);
    json per_entity = json::object();
    for (std::size_t e = 0; e < ds.entities.size(); ++e) {
      per_entity[ds.entities[e].id] = optional_or_null(run.per_entity_nse[e]);
    }
    entry["per_entity_nse"] = per_entity;
    per_seed.push_back(entry);

    ForwardCheckpoint fc;
    fc.model = run.model;
    fc.seed = cfg.seeds[i];
    fc.norm = ds.norm;
    fc.statics_source = statics_source;
    save_forward_checkpoint(
        (fs::path(a.out_dir) /
         ("forward_seed" + std::to_string(cfg.seeds[i]) + ".json"))
            .string(),
        fc);
  }
  report["per_seed"] = per_seed;
  write_json(fs::path(a.out_dir) / "report.json", report);
  std::cout << "train-forward[" << statics_source
            << "]: average_nse=" << ens.average_nse
            << " ensemble_nse=" << ens.ensemble_nse << "\n";
  return any_diverged ? 2 : 0;
}

int cmd_evaluate(const std::string& run_dir, std::string data_dir,
                 std::string out_dir, std::int64_t seed_override) {
  RunMeta meta = read_run_meta(run_dir);
  if (data_dir.empty()) data_dir = meta.data_dir;
  if (data_dir.empty()) {
    throw ConfigError("evaluate: no --data given and the run records none");
  }
  if (out_dir.empty()) out_dir = run_dir;
  TrainConfig cfg = load_config((fs::path(run_dir) / "config.toml").string(),
                                nullptr);
  InverseCheckpoint ckpt =
      load_checkpoint((fs::path(run_dir) / "checkpoint.json").string());
  std::uint64_t seed = seed_override >= 0
                           ? static_cast<std::uint64_t>(seed_override)
                           : ckpt.seed;
  EntityDataset ds = load_and_split(data_dir, cfg);
  EvalSummary summary = evaluate_inverse(ckpt.model, ds, Span::kTest, cfg.k_mc,
                                         mix_seed(seed, 9001), cfg.window);
  ensure_dir(out_dir);
  json report = eval_to_json(summary, ds);
  report["command"] = "evaluate";
  report["mode"] = meta.mode;
  report["placement"] = placement_name(ckpt.model.config.placement);
  report["seed"] = seed;
  report["split"] = "test";
  write_json(fs::path(out_dir) / "report.json", report);
  write_report_csv(fs::path(out_dir) / "report.csv", report);
  std::cout << "evaluate: static_mse=" << summary.static_mse
            << " coverage_2sd=" << summary.coverage_2sd << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& a) {
  std::string cfg_text;
  TrainConfig cfg = load_config(a.config_path, &cfg_text);
  std::uint64_t seed = pick_seed(cfg, a.seed_override);
  EntityDataset ds = load_and_split(a.data_dir, cfg);
  SweepResult sweep =
      robustness_sweep(cfg, ds, cfg.sweep_fractions, cfg.sweep_stds, seed);

  ensure_dir(a.out_dir);
  write_text(fs::path(a.out_dir) / "config.toml", cfg_text);
  RunMeta meta;
  meta.command = "robustness-sweep";
  meta.data_dir = a.data_dir;
  meta.seed = seed;
  meta.mode = mode_name(cfg.mode);
  write_run_meta(a.out_dir, meta);

  auto cell_json = [](const SweepCell& c) {
    json j;
    j["fraction"] = c.fraction;
    j["noise_std"] = c.noise_std;
    j["recon_mse"] = c.recon_mse;
    j["static_mse"] = c.static_mse;
    j["epistemic_mean"] = c.epistemic_mean;
    j["diverged"] = c.diverged;
    return j;
  };
  json report;
  report["command"] = "robustness-sweep";
  report["seed"] = seed;
  report["mode"] = mode_name(cfg.mode);
  report["clean"] = cell_json(sweep.clean);
  json cells = json::array();
  for (const SweepCell& c : sweep.cells) cells.push_back(cell_json(c));
  report["cells"] = cells;
  write_json(fs::path(a.out_dir) / "report.json", report);

  std::ofstream csv(fs::path(a.out_dir) / "sweep.csv");
  csv << "fraction,noise_std,recon_mse,static_mse,epistemic_mean,diverged\n";
  char buf[256];
  auto emit = [&](const SweepCell& c) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                  c.fraction, c.noise_std, c.recon_mse, c.static_mse,
                  c.epistemic_mean, c.diverged ? 1 : 0);
    csv << buf;
  };
  emit(sweep.clean);
  for (const SweepCell& c : sweep.cells) emit(c);
  std::cout << "robustness-sweep: " << sweep.cells.size()
            << " cells + clean baseline -> " << a.out_dir << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  if (runs.empty()) throw ConfigError("report: need at least one --runs dir");
  ensure_dir(out);
  std::ofstream csv(fs::path(out) / "comparison.csv");
  if (!csv) throw IoError("cannot write comparison.csv");
  csv << "run,mode,nse,coverage_63,coverage_95\n";
  std::ofstream scatter_csv(fs::path(out) / "scatter.csv");
  scatter_csv << "run,entity,feature,observed,predicted,sigma,unc_time\n";
  char buf[384];
  for (const std::string& run : runs) {
    json report = read_json(fs::path(run) / "report.json");
    std::string name = fs::path(run).filename().string();
    if (name.empty()) name = fs::path(run).parent_path().filename().string();
    std::string mode = report.value("mode", std::string("?"));
    bool deterministic = mode == "deterministic";
    auto fmt = [&](const json& v) {
      if (v.is_null()) return std::string("-");
      std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
      return std::string(buf);
    };
    std::string nse_s = fmt(report.value("static_nse", json()));
    std::string c1 = deterministic ? "-" : fmt(report.value("coverage_1sd", json()));
    std::string c2 = deterministic ? "-" : fmt(report.value("coverage_2sd", json()));
    csv << name << "," << mode << "," << nse_s << "," << c1 << "," << c2
        << "\n";

    if (report.contains("scatter")) {
      for (const auto& row : report.at("scatter")) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.10g,%.10g,%.10g,%.10g\n",
                      name.c_str(),
                      row.at("entity").get<std::string>().c_str(),
                      row.at("feature").get<std::string>().c_str(),
                      row.at("observed").get<double>(),
                      row.at("predicted").get<double>(),
                      row.at("sigma").get<double>(),
                      row.at("unc_time").get<double>());
        scatter_csv << buf;
      }
      write_run_scatter_svg(fs::path(out) / ("scatter_" + name + ".svg"),
                            report);
    }
  }
  std::cout << "report: wrote comparison.csv for " << runs.size()
            << " runs to " << out << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{
      "invbasin: probabilistic inverse modeling of river-basin "
      "characteristics from driver-response series"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand(
      "generate", "Generate a synthetic basin dataset as CSV files");
  std::size_t gen_entities = 32, gen_days = 5475;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--entities", gen_entities, "Number of entities");
  gen->add_option("--days", gen_days, "Days of daily data");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto add_common = [](CLI::App* cmd, CommonArgs& a, bool need_data) {
    cmd->add_option("--config", a.config_path,
                    "Config file (defaults apply when omitted)");
    auto* data =
        cmd->add_option("--data", a.data_dir, "Dataset directory (CSV files)");
    if (need_data) data->required();
    cmd->add_option("--out", a.out_dir, "Run output directory")->required();
    cmd->add_option("--seed", a.seed_override, "Seed override");
  };

  auto* train = app.add_subcommand("train-inverse",
                                   "Train the inverse model on a dataset");
  CommonArgs train_args;
  add_common(train, train_args, true);

  auto* ubl_cmd = app.add_subcommand(
      "ubl", "Uncertainty-based phase-2 training from a probabilistic run");
  CommonArgs ubl_args;
  std::string ubl_base;
  add_common(ubl_cmd, ubl_args, false);
  ubl_cmd->add_option("--base", ubl_base, "Base probabilistic run directory")
      ->required();

  auto* fwd = app.add_subcommand(
      "train-forward", "Train the streamflow model on observed or "
                       "reconstructed statics");
  CommonArgs fwd_args;
  std::string fwd_statics = "observed", fwd_inverse_run;
  add_common(fwd, fwd_args, true);
  fwd->add_option("--statics", fwd_statics, "observed | reconstructed");
  fwd->add_option("--inverse-run", fwd_inverse_run,
                  "Inverse run directory for reconstructed statics");

  auto* eval = app.add_subcommand("evaluate",
                                  "Evaluate a run's checkpoint on test data");
  std::string eval_run, eval_data, eval_out;
  std::int64_t eval_seed = -1;
  eval->add_option("--run", eval_run, "Run directory")->required();
  eval->add_option("--data", eval_data, "Dataset directory override");
  eval->add_option("--out", eval_out, "Output directory (default: run dir)");
  eval->add_option("--seed", eval_seed, "Seed override");

  auto* sweep = app.add_subcommand("robustness-sweep",
                                   "Train across a training-noise grid");
  CommonArgs sweep_args;
  add_common(sweep, sweep_args, true);

  auto* rep = app.add_subcommand(
      "report", "Merge run reports into comparison tables and scatter plots");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  rep->add_option("--runs", rep_runs, "Run directories")->expected(-1);
  rep->add_option("--out", rep_out, "Output directory")->required();

  std::vector<std::string> argv = args;
  argv.insert(argv.begin(), "invbasin");
  std::vector<const char*> cargv;
  cargv.reserve(argv.size());
  for (const auto& s : argv) cargv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(gen_entities, gen_days, gen_seed, gen_out);
    }
    if (train->parsed()) return cmd_train_inverse(train_args);
    if (ubl_cmd->parsed()) return cmd_ubl(ubl_args, ubl_base);
    if (fwd->parsed()) {
      return cmd_train_forward(fwd_args, fwd_statics, fwd_inverse_run);
    }
    if (eval->parsed()) {
      return cmd_evaluate(eval_run, eval_data, eval_out, eval_seed);
    }
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (rep->parsed()) return cmd_report(rep_runs, rep_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o failure: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace invbasin
