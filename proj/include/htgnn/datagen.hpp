#pragma once

// Synthetic heterogeneous sensor-stream generators emulating the statistical
// structure of a bearing test rig (load/speed grid, speed-dependent vibration
// spectrum, load-dependent temperature field) and a railway bridge
// (temperature-shifted acceleration spectrum, load-proportional deflection),
// plus noise injection, low-frequency preprocessing, windowing, leakage-free
// temporal splits, and dataset disk I/O.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htgnn/errors.hpp"
#include "htgnn/graph.hpp"
#include "htgnn/sample.hpp"

namespace htgnn::datagen {

using Mat = Eigen::MatrixXd;
using graph::HeteroTemporalGraph;
using json = nlohmann::json;

constexpr int kGeneratorVersion = 1;
constexpr double kNoNoise = std::numeric_limits<double>::infinity();

enum class DatasetKind { BearingLike, BridgeLike };

inline std::string kind_name(DatasetKind k) {
  return k == DatasetKind::BearingLike ? "bearing-like" : "bridge-like";
}

inline DatasetKind kind_from_name(const std::string& s) {
  if (s == "bearing-like") return DatasetKind::BearingLike;
  if (s == "bridge-like") return DatasetKind::BridgeLike;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

// One operating condition's aligned multichannel recording. Low-frequency
// channels are generated at 1/10 rate and linearly upsampled onto the common
// time base; the target is constant over the recording.
struct RawSeries {
  int condition = 0;
  int day = 0;
  Mat x_l, x_h, w;    // channels x T
  Eigen::VectorXd y;  // d_y
};

struct BearingConfig {
  // (axial, radial) load combinations in kN; crossed with every speed.
  std::vector<std::pair<double, double>> loads = {
      {10, 10}, {20, 10}, {30, 10}, {40, 10}, {50, 10}, {10, 20},
      {10, 30}, {10, 40}, {20, 20}, {30, 20}, {20, 30}};
  std::vector<double> speeds = {10, 20, 30, 40, 50};  // r/min-like grid
  int samples_per_condition = 70;
  double snr_db = 35.0;
  int window = 30;
  int stride = 1;
  double amp0 = 1.0;        // vibration base amplitude
  double temp_coef = 1e-3;  // temperature-rate scale
  int harmonics = 3;

  json to_json() const {
    json jl = json::array();
    for (auto [a, r] : loads) jl.push_back(json::array({a, r}));
    return json{{"loads", jl},
                {"speeds", speeds},
                {"samples_per_condition", samples_per_condition},
                {"snr_db", snr_db == kNoNoise ? json() : json(snr_db)},
                {"window", window},
                {"stride", stride},
                {"amp0", amp0},
                {"temp_coef", temp_coef},
                {"harmonics", harmonics}};
  }

  static BearingConfig from_json(const json& j) {
    BearingConfig c;
    const json defaults = c.to_json();
    for (const auto& [key, val] : j.items())
      if (!defaults.contains(key))
        throw ConfigError("unknown bearing config key '" + key + "'");
    if (j.contains("loads")) {
      c.loads.clear();
      for (const auto& p : j.at("loads"))
        c.loads.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    if (j.contains("speeds")) c.speeds = j.at("speeds").get<std::vector<double>>();
    if (j.contains("samples_per_condition"))
      c.samples_per_condition = j.at("samples_per_condition").get<int>();
    if (j.contains("snr_db"))
      c.snr_db = j.at("snr_db").is_null() ? kNoNoise : j.at("snr_db").get<double>();
    if (j.contains("window")) c.window = j.at("window").get<int>();
    if (j.contains("stride")) c.stride = j.at("stride").get<int>();
    if (j.contains("amp0")) c.amp0 = j.at("amp0").get<double>();
    if (j.contains("temp_coef")) c.temp_coef = j.at("temp_coef").get<double>();
    if (j.contains("harmonics")) c.harmonics = j.at("harmonics").get<int>();
    return c;
  }
};

struct BridgeConfig {
  int n_events = 40;
  int events_per_day = 4;
  int samples_per_event = 80;
  double load_min = 42100.0;  // kg
  double load_max = 53500.0;
  std::vector<double> temperatures = {-5, 2, 8, 14, 20, 26};  // cycled per event
  double snr_db = 35.0;
  int window = 60;
  int stride = 5;
  int n_d = 4;  // displacement (low-frequency) sensors
  int n_a = 4;  // acceleration (high-frequency) sensors
  double freq_base = 0.05;   // cycles/sample at 0 degrees C
  double freq_slope = 2e-3;  // cycles/sample per degree C

  json to_json() const {
    return json{{"n_events", n_events},
                {"events_per_day", events_per_day},
                {"samples_per_event", samples_per_event},
                {"load_min", load_min},
                {"load_max", load_max},
                {"temperatures", temperatures},
                {"snr_db", snr_db == kNoNoise ? json() : json(snr_db)},
                {"window", window},
                {"stride", stride},
                {"n_d", n_d},
                {"n_a", n_a},
                {"freq_base", freq_base},
                {"freq_slope", freq_slope}};
  }

  static BridgeConfig from_json(const json& j) {
    BridgeConfig c;
    const json defaults = c.to_json();
    for (const auto& [key, val] : j.items())
      if (!defaults.contains(key))
        throw ConfigError("unknown bridge config key '" + key + "'");
    auto get_int = [&](const char* k, int& out) {
      if (j.contains(k)) out = j.at(k).get<int>();
    };
    auto get_dbl = [&](const char* k, double& out) {
      if (j.contains(k)) out = j.at(k).get<double>();
    };
    get_int("n_events", c.n_events);
    get_int("events_per_day", c.events_per_day);
    get_int("samples_per_event", c.samples_per_event);
    get_dbl("load_min", c.load_min);
    get_dbl("load_max", c.load_max);
    if (j.contains("temperatures"))
      c.temperatures = j.at("temperatures").get<std::vector<double>>();
    if (j.contains("snr_db"))
      c.snr_db = j.at("snr_db").is_null() ? kNoNoise : j.at("snr_db").get<double>();
    get_int("window", c.window);
    get_int("stride", c.stride);
    get_int("n_d", c.n_d);
    get_int("n_a", c.n_a);
    get_dbl("freq_base", c.freq_base);
    get_dbl("freq_slope", c.freq_slope);
    return c;
  }
};

struct Dataset {
  DatasetKind kind = DatasetKind::BearingLike;
  int window = 30;
  int stride = 1;
  int n_l = 0, n_h = 0, n_w = 1;
  std::uint64_t seed = 0;
  std::vector<RawSeries> series;  // one per condition, in condition order
  json conditions;                // per-condition metadata table
  std::vector<std::string> sensor_names;
  std::vector<std::string> target_names;

  HeteroTemporalGraph graph() const {
    if (kind == DatasetKind::BearingLike) return graph::bearing_topology();
    return graph::bridge_topology(n_l, n_h);
  }

  std::map<int, int> day_of_condition() const {
    std::map<int, int> m;
    for (const RawSeries& s : series) m[s.condition] = s.day;
    return m;
  }
};

// ---- noise ---------------------------------------------------------------------

// Additive white Gaussian noise at the requested SNR relative to the mean
// square of the input. snr_db = +inf leaves the signal untouched.
inline Mat add_noise(const Mat& signal, double snr_db, std::mt19937_64& rng) {
  if (snr_db == kNoNoise) return signal;
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite or +inf");
  const double power = signal.array().square().mean();
  if (power <= 0.0) throw ZeroPowerSignal("cannot scale noise to a zero signal");
  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> dist(0.0, noise_std);
  Mat out = signal;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += dist(rng);
  return out;
}

// ---- low-frequency preprocessing ---------------------------------------------

// Centered moving average; output length = n - window + 1 (valid region only).
inline Eigen::VectorXd moving_average(const Eigen::VectorXd& series,
                                      int window) {
  if (window < 1 || window % 2 == 0)
    throw ConfigError("moving-average window must be odd and positive");
  if (series.size() < window)
    throw SeriesTooShort("series shorter than the moving-average window");
  Eigen::VectorXd ma(series.size() - window + 1);
  for (Eigen::Index t = 0; t < ma.size(); ++t)
    ma(t) = series.segment(t, window).mean();
  return ma;
}

// Centered moving average followed by a finite-difference rate of change over
// rate_horizon samples. Output length = n - ma_window + 1 - rate_horizon.
inline Eigen::VectorXd preprocess_low_freq(const Eigen::VectorXd& series,
                                           int ma_window, int rate_horizon) {
  if (rate_horizon < 1) throw ConfigError("rate_horizon must be positive");
  const Eigen::Index n = series.size();
  if (n <= ma_window + rate_horizon)
    throw SeriesTooShort("series shorter than ma_window + rate_horizon");
  const Eigen::VectorXd ma = moving_average(series, ma_window);
  Eigen::VectorXd rate(ma.size() - rate_horizon);
  for (Eigen::Index t = 0; t < rate.size(); ++t)
    rate(t) = (ma(t + rate_horizon) - ma(t)) / static_cast<double>(rate_horizon);
  return rate;
}

namespace detail {

// Linear interpolation of each row from T_low points onto T points.
inline Mat upsample_linear(const Mat& low, Eigen::Index t_out) {
  const Eigen::Index t_in = low.cols();
  if (t_in == 1) return low.col(0) * Eigen::RowVectorXd::Ones(t_out);
  Mat out(low.rows(), t_out);
  const double scale = static_cast<double>(t_in - 1) / static_cast<double>(t_out - 1);
  for (Eigen::Index t = 0; t < t_out; ++t) {
    const double pos = static_cast<double>(t) * scale;
    const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index hi = std::min(lo + 1, t_in - 1);
    const double frac = pos - static_cast<double>(lo);
    out.col(t) = (1.0 - frac) * low.col(lo) + frac * low.col(hi);
  }
  return out;
}

inline std::mt19937_64 condition_rng(std::uint64_t seed, int condition) {
  return std::mt19937_64(seed * 1000003ULL +
                         static_cast<std::uint64_t>(condition) * 7919ULL + 1ULL);
}

}  // namespace detail

// ---- generators -----------------------------------------------------------------

// Bearing-like rig: high-frequency channels are harmonic series whose
// fundamental is proportional to speed and whose amplitudes shrink with load;
// low-frequency channels are a spatially weighted temperature-rate field
// c * (F_x + F_y * z_i) * speed, where z_i varies across sensors so the
// radial load is only decodable from the temperature field.
inline Dataset generate_bearing_like(const BearingConfig& cfg,
                                     std::uint64_t seed) {
  if (cfg.loads.empty() || cfg.speeds.empty())
    throw EmptyGrid("bearing condition grid is empty");
  if (cfg.samples_per_condition < cfg.window)
    throw SeriesTooShort("samples_per_condition shorter than one window");

  const HeteroTemporalGraph g = graph::bearing_topology();
  Dataset ds;
  ds.kind = DatasetKind::BearingLike;
  ds.window = cfg.window;
  ds.stride = cfg.stride;
  ds.n_l = g.count(graph::NodeKind::Low);
  ds.n_h = g.count(graph::NodeKind::High);
  ds.n_w = 1;
  ds.seed = seed;
  for (int i = 0; i < g.n_nodes(); ++i) {
    const graph::Node& nd = g.node(i);
    ds.sensor_names.push_back(nd.subtype + " " + std::to_string(nd.index));
  }
  ds.sensor_names.push_back("speed");
  ds.target_names = {"F_x", "F_y"};
  ds.conditions = json::array();

  const int T = cfg.samples_per_condition;
  const int t_low = std::max(2, T / 10);
  int cond = 0;
  for (const auto& [fx, fy] : cfg.loads) {
    for (double s : cfg.speeds) {
      std::mt19937_64 rng = detail::condition_rng(seed, cond);
      RawSeries r;
      r.condition = cond;
      r.day = cond;
      r.y = Eigen::Vector2d(fx, fy);

      // high-frequency: harmonic series, fundamental = speed / 500 cyc/sample
      const double f0 = s / 500.0;
      const double load_norm = (fx + 0.2 * fy) / 50.0;
      Mat xh(ds.n_h, T);
      for (int i = 0; i < ds.n_h; ++i)
        for (int t = 0; t < T; ++t) {
          double v = 0.0;
          for (int k = 1; k <= cfg.harmonics; ++k) {
            const double amp = cfg.amp0 / (k * (1.0 + load_norm));
            const double phase = 2.0 * M_PI * (0.37 * i + 0.11 * k);
            v += amp * std::sin(2.0 * M_PI * k * f0 * t + phase);
          }
          xh(i, t) = v;
        }
      if (xh.array().square().mean() > 0.0)
        xh = add_noise(xh, cfg.snr_db, rng);
      r.x_h = xh;

      // low-frequency: constant temperature-rate field at 1/10 rate
      Mat xl_low(ds.n_l, t_low);
      for (int i = 0; i < ds.n_l; ++i) {
        const double z = ds.n_l > 1 ? static_cast<double>(i) / (ds.n_l - 1) : 0.0;
        xl_low.row(i).setConstant(cfg.temp_coef * (fx + fy * z) * s);
      }
      if (xl_low.array().square().mean() > 0.0)
        xl_low = add_noise(xl_low, cfg.snr_db, rng);
      r.x_l = detail::upsample_linear(xl_low, T);

      r.w = Mat::Constant(1, T, s);

      ds.conditions.push_back({{"id", cond},
                               {"day", r.day},
                               {"F_x", fx},
                               {"F_y", fy},
                               {"speed", s}});
      ds.series.push_back(std::move(r));
      ++cond;
    }
  }
  return ds;
}

// Bridge-like crossings: acceleration channels carry a dominant frequency
// shifted upward by temperature; displacement channels carry a quasi-static
// deflection bump whose peak is proportional to the train load.
inline Dataset generate_bridge_like(const BridgeConfig& cfg,
                                    std::uint64_t seed) {
  if (cfg.n_events < 1) throw EmptyGrid("bridge event grid is empty");
  if (cfg.samples_per_event < cfg.window)
    throw SeriesTooShort("samples_per_event shorter than one window");

  Dataset ds;
  ds.kind = DatasetKind::BridgeLike;
  ds.window = cfg.window;
  ds.stride = cfg.stride;
  ds.n_l = cfg.n_d;
  ds.n_h = cfg.n_a;
  ds.n_w = 1;
  ds.seed = seed;
  for (int i = 0; i < cfg.n_d; ++i)
    ds.sensor_names.push_back("D " + std::to_string(i));
  for (int i = 0; i < cfg.n_a; ++i)
    ds.sensor_names.push_back("A " + std::to_string(i));
  ds.sensor_names.push_back("temperature");
  ds.target_names = {"load_kg"};
  ds.conditions = json::array();

  const int T = cfg.samples_per_event;
  const int t_low = std::max(2, T / 10);
  for (int e = 0; e < cfg.n_events; ++e) {
    std::mt19937_64 rng = detail::condition_rng(seed, e);
    std::uniform_real_distribution<double> load_dist(cfg.load_min, cfg.load_max);
    const double load = load_dist(rng);
    const double temp = cfg.temperatures[e % cfg.temperatures.size()];
    const int speed_class = e % 3;

    RawSeries r;
    r.condition = e;
    r.day = 1 + e / cfg.events_per_day;
    r.y = Eigen::VectorXd::Constant(1, load);

    const double f0 = cfg.freq_base + cfg.freq_slope * temp;
    Mat xh(cfg.n_a, T);
    for (int i = 0; i < cfg.n_a; ++i)
      for (int t = 0; t < T; ++t)
        xh(i, t) = std::sin(2.0 * M_PI * f0 * t + 0.59 * i) +
                   0.3 * std::sin(2.0 * M_PI * 2.0 * f0 * t + 0.23 * i);
    xh = add_noise(xh, cfg.snr_db, rng);
    r.x_h = xh;

    const double load_norm = load / cfg.load_min - 1.0;  // 0 at base load
    Mat xl_low(cfg.n_d, t_low);
    for (int i = 0; i < cfg.n_d; ++i)
      for (int t = 0; t < t_low; ++t) {
        const double u = static_cast<double>(t) / (t_low - 1);
        const double shape = std::sin(M_PI * u);  // mid-span deflection bump
        xl_low(i, t) = (1.0 + load_norm) * shape * (0.8 + 0.05 * i);
      }
    xl_low = add_noise(xl_low, cfg.snr_db, rng);
    r.x_l = detail::upsample_linear(xl_low, T);

    r.w = Mat::Constant(1, T, temp);

    ds.conditions.push_back({{"id", e},
                             {"day", r.day},
                             {"load_kg", load},
                             {"temperature", temp},
                             {"speed_class", speed_class}});
    ds.series.push_back(std::move(r));
  }
  return ds;
}

// ---- windowing ------------------------------------------------------------------

inline std::vector<SensorWindow> window_series(const RawSeries& r, int window,
                                               int stride) {
  const Eigen::Index T = r.x_h.cols() > 0 ? r.x_h.cols() : r.x_l.cols();
  if (T < window) throw SeriesTooShort("series shorter than one window");
  if (stride < 1) throw ConfigError("stride must be positive");
  const int count = static_cast<int>((T - window) / stride) + 1;
  std::vector<SensorWindow> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const Eigen::Index off = static_cast<Eigen::Index>(k) * stride;
    SensorWindow s;
    s.x_l = r.x_l.middleCols(off, window);
    s.x_h = r.x_h.middleCols(off, window);
    s.w = r.w.middleCols(off, window);
    s.y = r.y;  // target at the window's final index (constant per series)
    s.condition = r.condition;
    s.window_index = k;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SensorWindow> window_dataset(const Dataset& ds) {
  std::vector<SensorWindow> out;
  for (const RawSeries& r : ds.series) {
    auto w = window_series(r, ds.window, ds.stride);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

// ---- temporal split --------------------------------------------------------------

struct Split {
  std::vector<SensorWindow> train, val, test;
};

// Bearing mode: per condition, the chronologically first half of the windows
// is split 80/20 into train/val (seeded shuffle); the second half is test.
// Bridge mode: odd days feed train/val (80/20), even days are test.
inline Split temporal_split(const std::vector<SensorWindow>& windows,
                            DatasetKind mode, std::uint64_t seed,
                            const std::map<int, int>& day_of_condition = {}) {
  std::map<int, std::vector<const SensorWindow*>> groups;  // key: cond or day
  for (const SensorWindow& w : windows) {
    int key = w.condition;
    if (mode == DatasetKind::BridgeLike) {
      auto it = day_of_condition.find(w.condition);
      if (it == day_of_condition.end())
        throw ConfigError("bridge split requires a day for every condition");
      key = it->second;
    }
    groups[key].push_back(&w);
  }

  Split out;
  auto split_80_20 = [&](std::vector<const SensorWindow*> pool, int key) {
    std::mt19937_64 rng(seed ^ (static_cast<std::uint64_t>(key) * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(pool.size())));
    for (std::size_t k = 0; k < pool.size(); ++k)
      (k < n_train ? out.train : out.val).push_back(*pool[k]);
  };

  for (auto& [key, grp] : groups) {
    if (grp.size() < 5)
      throw GroupTooSmall("split group " + std::to_string(key) +
                          " has fewer than 5 windows");
    std::stable_sort(grp.begin(), grp.end(),
                     [](const SensorWindow* a, const SensorWindow* b) {
                       if (a->condition != b->condition)
                         return a->condition < b->condition;
                       return a->window_index < b->window_index;
                     });
    if (mode == DatasetKind::BearingLike) {
      const std::size_t n_tv = grp.size() / 2;
      split_80_20({grp.begin(), grp.begin() + static_cast<std::ptrdiff_t>(n_tv)},
                  key);
      for (std::size_t k = n_tv; k < grp.size(); ++k)
        out.test.push_back(*grp[k]);
    } else {
      if (key % 2 == 1) {
        split_80_20({grp.begin(), grp.end()}, key);
      } else {
        for (const SensorWindow* w : grp) out.test.push_back(*w);
      }
    }
  }
  return out;
}

// ---- disk format ------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string condition_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cond_%04d.csv", id);
  return buf;
}

}  // namespace detail

// One directory per dataset: manifest.json plus a CSV per condition with one
// column per sensor and target and one row per time step.
inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json manifest{{"kind", kind_name(ds.kind)},
                {"generator_version", kGeneratorVersion},
                {"window", ds.window},
                {"stride", ds.stride},
                {"n_l", ds.n_l},
                {"n_h", ds.n_h},
                {"n_w", ds.n_w},
                {"seed", ds.seed},
                {"rates", {{"high", 1.0}, {"low", 0.1}}},
                {"sensors", ds.sensor_names},
                {"targets", ds.target_names},
                {"conditions", json::array()}};
  for (const RawSeries& r : ds.series) {
    json meta = ds.conditions[r.condition];
    meta["file"] = detail::condition_file(r.condition);
    manifest["conditions"].push_back(std::move(meta));
  }
  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";

  for (const RawSeries& r : ds.series) {
    std::ofstream cf(fs::path(dir) / detail::condition_file(r.condition));
    if (!cf) throw IoError("cannot write condition file in " + dir);
    for (std::size_t k = 0; k < ds.sensor_names.size(); ++k)
      cf << (k ? "," : "") << ds.sensor_names[k];
    for (const std::string& t : ds.target_names) cf << "," << t;
    cf << "\n";
    const Eigen::Index T = r.x_h.cols();
    for (Eigen::Index t = 0; t < T; ++t) {
      bool first = true;
      for (const Mat* m : {&r.x_l, &r.x_h, &r.w})
        for (Eigen::Index i = 0; i < m->rows(); ++i) {
          cf << (first ? "" : ",") << detail::fmt_double((*m)(i, t));
          first = false;
        }
      for (Eigen::Index i = 0; i < r.y.size(); ++i)
        cf << "," << detail::fmt_double(r.y(i));
      cf << "\n";
    }
  }
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("cannot read manifest in " + dir);
  json manifest = json::parse(mf);

  Dataset ds;
  ds.kind = kind_from_name(manifest.at("kind").get<std::string>());
  ds.window = manifest.at("window").get<int>();
  ds.stride = manifest.at("stride").get<int>();
  ds.n_l = manifest.at("n_l").get<int>();
  ds.n_h = manifest.at("n_h").get<int>();
  ds.n_w = manifest.at("n_w").get<int>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.sensor_names = manifest.at("sensors").get<std::vector<std::string>>();
  ds.target_names = manifest.at("targets").get<std::vector<std::string>>();
  ds.conditions = manifest.at("conditions");

  const int d_y = static_cast<int>(ds.target_names.size());
  for (const json& meta : manifest.at("conditions")) {
    std::ifstream cf(fs::path(dir) / meta.at("file").get<std::string>());
    if (!cf)
      throw IoError("cannot read " + meta.at("file").get<std::string>());
    std::string line;
    if (!std::getline(cf, line)) throw IoError("empty condition file");
    std::vector<std::vector<double>> rows;
    while (std::getline(cf, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      rows.push_back(std::move(row));
    }
    const Eigen::Index T = static_cast<Eigen::Index>(rows.size());
    const int expected = ds.n_l + ds.n_h + ds.n_w + d_y;
    RawSeries r;
    r.condition = meta.at("id").get<int>();
    r.day = meta.at("day").get<int>();
    r.x_l.resize(ds.n_l, T);
    r.x_h.resize(ds.n_h, T);
    r.w.resize(ds.n_w, T);
    r.y.resize(d_y);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (static_cast<int>(rows[t].size()) != expected)
        throw IoError("condition file column count mismatch");
      int c = 0;
      for (int i = 0; i < ds.n_l; ++i) r.x_l(i, t) = rows[t][c++];
      for (int i = 0; i < ds.n_h; ++i) r.x_h(i, t) = rows[t][c++];
      for (int i = 0; i < ds.n_w; ++i) r.w(i, t) = rows[t][c++];
      for (int i = 0; i < d_y; ++i) r.y(i) = rows[t][c++];
    }
    ds.series.push_back(std::move(r));
  }
  return ds;
}

}  // namespace htgnn::datagen
