// Batch entry point: dataset generation, training, evaluation, ablation
// sweeps, and figure emission. Exit codes: 0 success, 2 usage/config error,
// 3 training divergence, 4 data/shape mismatch.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "htgnn/datagen.hpp"
#include "htgnn/model.hpp"
#include "htgnn/training.hpp"

namespace fs = std::filesystem;
using htgnn::SensorWindow;
using json = nlohmann::json;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoull(tok));
  }
  if (out.empty()) throw htgnn::ConfigError("seed list is empty");
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw htgnn::IoError("cannot read " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw htgnn::ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (fs::path(path).has_parent_path())
    fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path);
  if (!f) throw htgnn::IoError("cannot write " + path);
  f << text;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Config file layout for train/ablate: {"model": {...}, "train": {...}}.
struct RunConfig {
  json model_json = json::object();
  json train_json = json::object();

  static RunConfig load(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    json j = read_json_file(path);
    for (const auto& [key, val] : j.items()) {
      if (key == "model")
        rc.model_json = val;
      else if (key == "train")
        rc.train_json = val;
      else
        throw htgnn::ConfigError("unknown config section '" + key +
                                 "' (expected model/train)");
    }
    return rc;
  }
};

// Model config seeded from the dataset shape, then file overrides, then the
// --variant flag.
htgnn::model::ModelConfig model_config_for(const htgnn::datagen::Dataset& ds,
                                           json overrides,
                                           const std::string& variant) {
  if (!overrides.contains("window")) overrides["window"] = ds.window;
  if (!overrides.contains("n_w")) overrides["n_w"] = ds.n_w;
  if (!overrides.contains("d_y"))
    overrides["d_y"] = static_cast<int>(ds.target_names.size());
  htgnn::model::ModelConfig cfg = htgnn::model::ModelConfig::from_json(overrides);
  if (!variant.empty()) cfg.variant = htgnn::model::variant_from_name(variant);
  return cfg;
}

struct LoadedData {
  htgnn::datagen::Dataset ds;
  htgnn::datagen::Split split;
};

LoadedData load_and_split(const std::string& dir, std::uint64_t seed) {
  LoadedData d;
  d.ds = htgnn::datagen::load_dataset(dir);
  const auto windows = htgnn::datagen::window_dataset(d.ds);
  d.split = htgnn::datagen::temporal_split(windows, d.ds.kind, seed,
                                           d.ds.day_of_condition());
  return d;
}

// Overall metrics of a prediction function over a sample set; NRMSE is
// reported as null where the true values are constant within a category.
json tolerant_metrics(
    const std::function<Eigen::VectorXd(const SensorWindow&)>& predict,
    const std::vector<SensorWindow>& samples,
    const std::function<std::string(int)>& label) {
  if (samples.empty()) throw htgnn::EmptyCategory("no samples to evaluate");
  const int d_y = static_cast<int>(samples.front().y.size());
  std::map<std::string, std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>>
      by_cat;
  for (const SensorWindow& s : samples)
    by_cat[label(s.condition)].emplace_back(s.y, predict(s));

  json cats = json::object();
  double nrmse_sum = 0.0;
  int nrmse_cats = 0;
  std::vector<double> mape_sum(d_y, 0.0);
  for (const auto& [name, pairs] : by_cat) {
    double cat_nrmse = 0.0;
    bool degenerate = false;
    std::vector<double> cat_mape(d_y, 0.0);
    for (int t = 0; t < d_y; ++t) {
      Eigen::VectorXd yt(pairs.size()), yp(pairs.size());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        yt(static_cast<Eigen::Index>(k)) = pairs[k].first(t);
        yp(static_cast<Eigen::Index>(k)) = pairs[k].second(t);
      }
      try {
        cat_nrmse += htgnn::training::nrmse(yt, yp);
      } catch (const htgnn::DegenerateRange&) {
        degenerate = (yt - yp).squaredNorm() > 0.0;
        if (!degenerate) cat_nrmse += 0.0;
      }
      cat_mape[t] = htgnn::training::mape(yt, yp);
    }
    json entry{{"mape", cat_mape}, {"n", pairs.size()}};
    if (degenerate) {
      entry["nrmse"] = nullptr;
    } else {
      entry["nrmse"] = cat_nrmse / d_y;
      nrmse_sum += cat_nrmse / d_y;
      nrmse_cats += 1;
    }
    for (int t = 0; t < d_y; ++t) mape_sum[t] += cat_mape[t];
    cats[name] = std::move(entry);
  }
  const double n_cats = static_cast<double>(by_cat.size());
  for (double& v : mape_sum) v /= n_cats;
  json avg{{"mape", mape_sum}, {"n", samples.size()}};
  avg["nrmse"] =
      nrmse_cats > 0 ? json(nrmse_sum / nrmse_cats) : json(nullptr);
  return json{{"categories", std::move(cats)}, {"average", std::move(avg)}};
}

// ---- svg helpers ------------------------------------------------------------------

std::string svg_open(int w, int h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
    << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  return s.str();
}

std::string svg_text(double x, double y, const std::string& t, int size = 11) {
  std::ostringstream s;
  s << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
    << "\" font-family=\"sans-serif\">" << t << "</text>\n";
  return s.str();
}

std::string svg_line(double x1, double y1, double x2, double y2,
                     const std::string& color = "#333") {
  std::ostringstream s;
  s << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2
    << "\" y2=\"" << y2 << "\" stroke=\"" << color << "\"/>\n";
  return s.str();
}

const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                          "#66ccee", "#aa3377", "#bbbbbb"};

// ---- commands ---------------------------------------------------------------------

int cmd_generate(const std::string& dataset, const std::string& config_path,
                 std::uint64_t seed, const std::string& out) {
  const auto kind = htgnn::datagen::kind_from_name(dataset);
  json cfg_json =
      config_path.empty() ? json::object() : read_json_file(config_path);
  htgnn::datagen::Dataset ds;
  if (kind == htgnn::datagen::DatasetKind::BearingLike) {
    const auto cfg = htgnn::datagen::BearingConfig::from_json(cfg_json);
    ds = htgnn::datagen::generate_bearing_like(cfg, seed);
  } else {
    const auto cfg = htgnn::datagen::BridgeConfig::from_json(cfg_json);
    ds = htgnn::datagen::generate_bridge_like(cfg, seed);
  }
  htgnn::datagen::save_dataset(ds, out);
  std::cout << "wrote " << ds.series.size() << " conditions ("
            << htgnn::datagen::window_dataset(ds).size() << " windows) to "
            << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& variant,
              const std::string& seed_list, const std::string& out,
              const std::string& config_path) {
  const RunConfig rc = RunConfig::load(config_path);
  const std::vector<std::uint64_t> seeds = parse_seeds(seed_list);

  for (std::uint64_t seed : seeds) {
    const fs::path run_dir =
        seeds.size() == 1 ? fs::path(out)
                          : fs::path(out) / ("seed_" + std::to_string(seed));
    fs::create_directories(run_dir);

    LoadedData d = load_and_split(data_dir, seed);
    htgnn::model::Model m =
        htgnn::model::Model::build(model_config_for(d.ds, rc.model_json, variant),
                                   d.ds.graph());
    m.init(seed);
    htgnn::training::TrainConfig tc =
        htgnn::training::TrainConfig::from_json(rc.train_json);
    tc.seed = seed;
    const htgnn::training::History hist =
        htgnn::training::train(m, d.split.train, d.split.val, tc);

    htgnn::model::save_checkpoint(m, (run_dir / "checkpoint.json").string());
    htgnn::training::save_history(hist, (run_dir / "history.csv").string());

    auto predict = [&](const SensorWindow& s) { return m.predict(s); };
    json metrics{{"val", tolerant_metrics(predict, d.split.val,
                                          [](int) { return "overall"; })},
                 {"best_epoch", hist.best_epoch},
                 {"epochs_run", hist.epochs_run},
                 {"variant", htgnn::model::variant_name(m.cfg.variant)},
                 {"seed", seed}};
    write_text((run_dir / "metrics.json").string(), metrics.dump(2) + "\n");
    std::cout << "seed " << seed << ": " << hist.epochs_run
              << " epochs, best " << hist.best_epoch << ", artifacts in "
              << run_dir.string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data_dir,
                 const std::string& by, const std::string& out,
                 const std::string& pred_csv) {
  htgnn::model::Model m = htgnn::model::load_checkpoint(ckpt);
  LoadedData d = load_and_split(data_dir, /*seed=*/0);
  const json& conds = d.ds.conditions;

  auto predict = [&](const SensorWindow& s) { return m.predict(s); };
  auto label = [&](int cond) {
    return htgnn::training::category_label(conds, by, cond);
  };
  json report = tolerant_metrics(predict, d.split.test, label);
  report["by"] = by;
  report["checkpoint"] = fs::path(ckpt).filename().string();

  if (!pred_csv.empty()) {
    std::ostringstream csv;
    csv << "condition,window_index,target,truth,pred\n";
    for (const SensorWindow& s : d.split.test) {
      const Eigen::VectorXd p = m.predict(s);
      for (Eigen::Index t = 0; t < s.y.size(); ++t)
        csv << s.condition << "," << s.window_index << ","
            << d.ds.target_names[static_cast<std::size_t>(t)] << ","
            << fmt(s.y(t)) << "," << fmt(p(t)) << "\n";
    }
    write_text(pred_csv, csv.str());
  }

  const std::string text = report.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& seed_list,
               const std::string& out, const std::string& config_path) {
  const std::vector<std::uint64_t> seeds = parse_seeds(seed_list);
  if (seeds.size() < 2)
    throw htgnn::ConfigError("ablation needs at least 2 seeds");
  const RunConfig rc = RunConfig::load(config_path);
  fs::create_directories(out);

  json rows = json::array();
  std::map<std::string, std::map<std::string, std::vector<double>>> agg;
  int failures = 0;

  for (const htgnn::model::Variant v : htgnn::model::ablation_variants()) {
    const std::string vname = htgnn::model::variant_name(v);
    for (std::uint64_t seed : seeds) {
      json row{{"variant", vname}, {"seed", seed}};
      try {
        LoadedData d = load_and_split(data_dir, seed);
        htgnn::model::Model m = htgnn::model::Model::build(
            model_config_for(d.ds, rc.model_json, vname), d.ds.graph());
        m.init(seed);
        htgnn::training::TrainConfig tc =
            htgnn::training::TrainConfig::from_json(rc.train_json);
        tc.seed = seed;
        const htgnn::training::History hist =
            htgnn::training::train(m, d.split.train, d.split.val, tc);
        auto predict = [&](const SensorWindow& s) { return m.predict(s); };
        const json mets = tolerant_metrics(predict, d.split.test,
                                           [](int) { return "overall"; });
        const json& avg = mets.at("average");
        row["status"] = "ok";
        row["test_nrmse"] = avg.at("nrmse");
        row["test_mape"] = avg.at("mape");
        row["epochs_run"] = hist.epochs_run;
        if (!avg.at("nrmse").is_null())
          agg[vname]["nrmse"].push_back(avg.at("nrmse").get<double>());
        const auto mape = avg.at("mape").get<std::vector<double>>();
        for (std::size_t t = 0; t < mape.size(); ++t)
          agg[vname]["mape_" + std::to_string(t)].push_back(mape[t]);
      } catch (const htgnn::Error& e) {
        row["status"] = "failed";
        row["error"] = e.what();
        failures += 1;
      }
      rows.push_back(std::move(row));
    }
  }

  json summary = json::object();
  for (const auto& [vname, metrics] : agg) {
    json entry = json::object();
    for (const auto& [metric, values] : metrics) {
      const auto [mean, ci] = htgnn::training::mean_ci(values);
      entry[metric] = {{"mean", mean}, {"ci95", ci}, {"runs", values.size()}};
    }
    summary[vname] = std::move(entry);
  }
  json report{{"rows", rows}, {"summary", summary}, {"failures", failures}};
  write_text((fs::path(out) / "report.json").string(), report.dump(2) + "\n");

  std::ostringstream csv;
  csv << "variant,seed,status,test_nrmse,test_mape\n";
  for (const json& row : rows) {
    csv << row.at("variant").get<std::string>() << ","
        << row.at("seed").get<std::uint64_t>() << ","
        << row.at("status").get<std::string>() << ",";
    if (row.at("status") == "ok") {
      csv << (row.at("test_nrmse").is_null()
                  ? std::string("")
                  : fmt(row.at("test_nrmse").get<double>()))
          << ",";
      const auto mape = row.at("test_mape").get<std::vector<double>>();
      for (std::size_t t = 0; t < mape.size(); ++t)
        csv << (t ? ";" : "") << fmt(mape[t]);
    } else {
      csv << ",";
    }
    csv << "\n";
  }
  write_text((fs::path(out) / "report.csv").string(), csv.str());

  std::cout << "ablation finished: " << rows.size() << " cells, " << failures
            << " failed\n";
  return 0;
}

// ---- plots ------------------------------------------------------------------------

int plot_bars(const json& report, const std::string& out) {
  const json& summary = report.at("summary");
  std::vector<std::string> variants, metrics;
  for (const auto& [v, entry] : summary.items()) {
    variants.push_back(v);
    if (metrics.empty())
      for (const auto& [mname, stat] : entry.items()) metrics.push_back(mname);
  }
  if (variants.empty()) throw htgnn::ConfigError("empty ablation summary");

  const int w = 720, h = 160 + 200 * static_cast<int>(metrics.size());
  std::ostringstream svg;
  svg << svg_open(w, h);
  int y0 = 30;
  for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
    const std::string& metric = metrics[mi];
    double top = 0.0;
    for (const auto& v : variants) {
      const json& st = summary.at(v).at(metric);
      top = std::max(top, st.at("mean").get<double>() + st.at("ci95").get<double>());
    }
    if (top <= 0.0) top = 1.0;
    svg << svg_text(20, y0, metric, 13);
    const double base = y0 + 170, height = 150;
    const double bw = (w - 80.0) / static_cast<double>(variants.size());
    svg << svg_line(40, base, w - 30, base);
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const json& st = summary.at(variants[vi]).at(metric);
      const double mean = st.at("mean").get<double>();
      const double ci = st.at("ci95").get<double>();
      const double x = 45 + bw * static_cast<double>(vi);
      const double bh = height * mean / top;
      svg << "<rect x=\"" << x << "\" y=\"" << base - bh << "\" width=\""
          << bw * 0.7 << "\" height=\"" << bh << "\" fill=\""
          << kPalette[vi % 7] << "\"/>\n";
      const double cx = x + bw * 0.35;
      svg << svg_line(cx, base - height * (mean + ci) / top, cx,
                      base - height * std::max(0.0, mean - ci) / top, "#111");
      svg << svg_text(x, base + 14, variants[vi].substr(0, 12), 9);
    }
    y0 += 200;
  }
  svg << "</svg>\n";
  write_text(out, svg.str());
  return 0;
}

int plot_timeline(const std::string& pred_csv, const std::string& out) {
  std::ifstream f(pred_csv);
  if (!f) throw htgnn::IoError("cannot read " + pred_csv);
  std::string line;
  std::getline(f, line);  // header
  std::string first_target;
  std::vector<double> truth, pred;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cond, idx, target, t, p;
    std::getline(ss, cond, ',');
    std::getline(ss, idx, ',');
    std::getline(ss, target, ',');
    std::getline(ss, t, ',');
    std::getline(ss, p, ',');
    if (first_target.empty()) first_target = target;
    if (target != first_target) continue;
    truth.push_back(std::stod(t));
    pred.push_back(std::stod(p));
  }
  if (truth.size() < 2) throw htgnn::ConfigError("not enough rows to plot");

  double res_var = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    res_var += (truth[k] - pred[k]) * (truth[k] - pred[k]);
  const double band = 1.96 * std::sqrt(res_var / static_cast<double>(truth.size()));

  double lo = truth[0], hi = truth[0];
  for (std::size_t k = 0; k < truth.size(); ++k) {
    lo = std::min({lo, truth[k], pred[k] - band});
    hi = std::max({hi, truth[k], pred[k] + band});
  }
  if (hi <= lo) hi = lo + 1.0;

  const int w = 760, h = 320;
  auto px = [&](std::size_t k) {
    return 50.0 + 680.0 * static_cast<double>(k) /
                      static_cast<double>(truth.size() - 1);
  };
  auto py = [&](double v) { return 280.0 - 240.0 * (v - lo) / (hi - lo); };

  std::ostringstream svg;
  svg << svg_open(w, h) << svg_text(20, 20, first_target + ": true vs predicted", 13);
  std::ostringstream bandpath;
  bandpath << "<path d=\"M";
  for (std::size_t k = 0; k < truth.size(); ++k)
    bandpath << px(k) << " " << py(pred[k] + band) << " L";
  for (std::size_t k = truth.size(); k-- > 0;)
    bandpath << px(k) << " " << py(pred[k] - band) << (k == 0 ? " Z" : " L");
  bandpath << "\" fill=\"#4477aa\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
  svg << bandpath.str();
  auto polyline = [&](const std::vector<double>& ys, const char* color) {
    std::ostringstream p;
    p << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t k = 0; k < ys.size(); ++k)
      p << px(k) << "," << py(ys[k]) << " ";
    p << "\"/>\n";
    return p.str();
  };
  svg << polyline(truth, "#222") << polyline(pred, "#ee6677");
  svg << svg_line(50, 280, 730, 280) << svg_line(50, 40, 50, 280);
  svg << "</svg>\n";
  write_text(out, svg.str());
  return 0;
}

int plot_spectrum(const std::string& dataset_dir, const std::string& out) {
  const htgnn::datagen::Dataset ds = htgnn::datagen::load_dataset(dataset_dir);
  const int n_series = std::min<int>(5, static_cast<int>(ds.series.size()));
  const int w = 760, h = 320;
  std::ostringstream svg;
  svg << svg_open(w, h)
      << svg_text(20, 20, "magnitude spectrum, first high-frequency channel", 13);

  double top = 0.0;
  std::vector<std::vector<double>> mags;
  const int step = std::max<std::size_t>(1, ds.series.size() / n_series);
  for (int s = 0; s < n_series; ++s) {
    const Eigen::VectorXd x = ds.series[static_cast<std::size_t>(s * step)]
                                  .x_h.row(0).transpose();
    const int n = static_cast<int>(x.size());
    std::vector<double> mag(static_cast<std::size_t>(n / 2));
    for (int k = 0; k < n / 2; ++k) {
      std::complex<double> acc(0, 0);
      for (int t = 0; t < n; ++t)
        acc += x(t) * std::polar(1.0, -2.0 * M_PI * k * t / n);
      mag[static_cast<std::size_t>(k)] = std::abs(acc);
      top = std::max(top, mag[static_cast<std::size_t>(k)]);
    }
    mags.push_back(std::move(mag));
  }
  if (top <= 0.0) top = 1.0;
  for (std::size_t s = 0; s < mags.size(); ++s) {
    std::ostringstream p;
    p << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 7] << "\" points=\"";
    for (std::size_t k = 0; k < mags[s].size(); ++k)
      p << 50.0 + 680.0 * static_cast<double>(k) /
                      static_cast<double>(mags[s].size() - 1)
        << "," << 280.0 - 240.0 * mags[s][k] / top << " ";
    p << "\"/>\n";
    svg << p.str();
  }
  svg << svg_line(50, 280, 730, 280) << svg_line(50, 40, 50, 280) << "</svg>\n";
  write_text(out, svg.str());
  return 0;
}

int cmd_plot(const std::string& report, const std::string& kind,
             const std::string& out) {
  if (kind == "bars") return plot_bars(read_json_file(report), out);
  if (kind == "timeline") return plot_timeline(report, out);
  if (kind == "spectrum") return plot_spectrum(report, out);
  throw htgnn::ConfigError("unknown plot kind '" + kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("HTGNN_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(env)));
  else
    Eigen::setNbThreads(1);

  CLI::App app{"heterogeneous temporal GNN virtual-sensing toolkit"};
  app.require_subcommand(1);

  std::string dataset, config, out, data_dir, variant, seeds = "0";
  std::string checkpoint, by = "condition", pred_csv, report, kind;
  std::uint64_t seed = 0;

  CLI::App* gen = app.add_subcommand("generate", "emit a synthetic dataset");
  gen->add_option("--dataset", dataset, "bearing-like or bridge-like")
      ->required()
      ->check(CLI::IsMember({"bearing-like", "bridge-like"}));
  gen->add_option("--config", config, "generator config JSON");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out, "output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train one variant");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--variant", variant, "model variant name");
  tr->add_option("--seed", seeds, "seed or comma-separated seed list");
  tr->add_option("--out", out, "run output directory")->required();
  tr->add_option("--config", config, "JSON with model/train sections");

  CLI::App* ev = app.add_subcommand("evaluate", "per-category test metrics");
  ev->add_option("--checkpoint", checkpoint, "checkpoint manifest JSON")
      ->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--by", by, "grouping key")
      ->check(CLI::IsMember({"speed", "temperature", "condition"}));
  ev->add_option("--out", out, "metrics JSON path (default stdout)");
  ev->add_option("--pred", pred_csv, "also write per-window predictions CSV");

  CLI::App* ab = app.add_subcommand("ablate", "variant x seed sweep");
  ab->add_option("--data", data_dir, "dataset directory")->required();
  ab->add_option("--seeds", seeds, "comma-separated seed list (>= 2)")
      ->required();
  ab->add_option("--out", out, "report output directory")->required();
  ab->add_option("--config", config, "JSON with model/train sections");

  CLI::App* pl = app.add_subcommand("plot", "emit a figure from a report");
  pl->add_option("--report", report,
                 "report JSON / predictions CSV / dataset dir")
      ->required();
  pl->add_option("--kind", kind, "bars, timeline, or spectrum")->required();
  pl->add_option("--out", out, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(dataset, config, seed, out);
    if (tr->parsed()) return cmd_train(data_dir, variant, seeds, out, config);
    if (ev->parsed())
      return cmd_evaluate(checkpoint, data_dir, by, out, pred_csv);
    if (ab->parsed()) return cmd_ablate(data_dir, seeds, out, config);
    if (pl->parsed()) return cmd_plot(report, kind, out);
  } catch (const htgnn::DivergedLoss& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const htgnn::ShapeMismatch& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 2;
}
