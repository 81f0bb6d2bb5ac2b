#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "htgnn/datagen.hpp"

using namespace htgnn;
using datagen::BearingConfig;
using datagen::BridgeConfig;
using datagen::Dataset;
using datagen::DatasetKind;
using Mat = Eigen::MatrixXd;

namespace {

// naive O(n^2) discrete Fourier transform magnitudes, bins 0..n/2
std::vector<double> dft_mag(const Eigen::RowVectorXd& x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> mag(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int t = 0; t < n; ++t) {
      const double ang = 2.0 * M_PI * k * t / n;
      re += x(t) * std::cos(ang);
      im -= x(t) * std::sin(ang);
    }
    mag[k] = std::hypot(re, im);
  }
  return mag;
}

int dominant_bin(const Eigen::RowVectorXd& x) {
  const auto mag = dft_mag(x);
  int best = 1;
  for (int k = 2; k < static_cast<int>(mag.size()); ++k)
    if (mag[k] > mag[best]) best = k;
  return best;
}

double spectral_centroid(const Eigen::RowVectorXd& x) {
  const auto mag = dft_mag(x);
  double num = 0.0, den = 0.0;
  for (int k = 1; k < static_cast<int>(mag.size()); ++k) {
    num += k * mag[k];
    den += mag[k];
  }
  return num / den;
}

// OLS fit with intercept; returns R^2.
double ols_r2(const Mat& features, const Eigen::VectorXd& y) {
  Mat x(features.rows(), features.cols() + 1);
  x << features, Eigen::VectorXd::Ones(features.rows());
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const double ss_res = (y - x * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  return 1.0 - ss_res / ss_tot;
}

BearingConfig noiseless_bearing() {
  BearingConfig cfg;
  cfg.snr_db = datagen::kNoNoise;
  return cfg;
}

}  // namespace

TEST_CASE("window counts follow floor((n - L) / stride) + 1") {
  auto make_series = [](int n) {
    datagen::RawSeries r;
    r.x_l = Mat::Zero(2, n);
    r.x_h = Mat::Zero(2, n);
    r.w = Mat::Zero(1, n);
    r.y = Eigen::VectorXd::Ones(1);
    return r;
  };
  CHECK(datagen::window_series(make_series(100), 30, 1).size() == 71);
  CHECK(datagen::window_series(make_series(60), 60, 5).size() == 1);
  auto three = datagen::window_series(make_series(70), 60, 5);
  REQUIRE(three.size() == 3);
  CHECK(three[2].window_index == 2);
  REQUIRE_THROWS_AS(datagen::window_series(make_series(29), 30, 1),
                    SeriesTooShort);

  std::mt19937_64 rng(5);
  for (int c = 0; c < 50; ++c) {
    const int L = 2 + static_cast<int>(rng() % 40);
    const int n = L + static_cast<int>(rng() % 200);
    const int stride = 1 + static_cast<int>(rng() % 7);
    const auto ws = datagen::window_series(make_series(n), L, stride);
    REQUIRE(static_cast<int>(ws.size()) == (n - L) / stride + 1);
  }
}

TEST_CASE("bearing generation is seed-deterministic and byte-identical on disk") {
  namespace fs = std::filesystem;
  BearingConfig cfg;
  cfg.loads = {{10, 10}, {20, 20}};
  cfg.speeds = {10, 30};
  Dataset a = datagen::generate_bearing_like(cfg, 7);
  Dataset b = datagen::generate_bearing_like(cfg, 7);
  REQUIRE(a.series.size() == 4);
  for (std::size_t k = 0; k < a.series.size(); ++k) {
    REQUIRE(a.series[k].x_h == b.series[k].x_h);
    REQUIRE(a.series[k].x_l == b.series[k].x_l);
  }

  const fs::path dir = fs::temp_directory_path() / "htgnn_dg_test";
  fs::remove_all(dir);
  datagen::save_dataset(a, (dir / "a").string());
  datagen::save_dataset(b, (dir / "b").string());
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(dir / "b" / entry.path().filename(), std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    REQUIRE(sa.str() == sb.str());
  }
  fs::remove_all(dir);

  Dataset c = datagen::generate_bearing_like(cfg, 8);
  REQUIRE(a.series[0].x_h != c.series[0].x_h);
}

TEST_CASE("dominant vibration frequency bin scales with speed") {
  BearingConfig cfg = noiseless_bearing();
  cfg.loads = {{20, 20}};
  cfg.speeds = {10, 20, 40};
  cfg.samples_per_condition = 500;
  Dataset ds = datagen::generate_bearing_like(cfg, 3);
  // fundamental = speed/500 cycles/sample over 500 samples -> bin = speed
  for (int i = 0; i < ds.n_h; ++i) {
    const int b10 = dominant_bin(ds.series[0].x_h.row(i));
    const int b20 = dominant_bin(ds.series[1].x_h.row(i));
    const int b40 = dominant_bin(ds.series[2].x_h.row(i));
    REQUIRE(b20 == 2 * b10);
    REQUIRE(b40 == 2 * b20);
  }
}

TEST_CASE("zero loads produce a zero-mean temperature field") {
  BearingConfig cfg;
  cfg.loads = {{0, 0}};
  cfg.speeds = {30};
  Dataset ds = datagen::generate_bearing_like(cfg, 9);
  REQUIRE(ds.series[0].x_l.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bridge spectral centroid rises with temperature") {
  BridgeConfig cfg;
  cfg.snr_db = datagen::kNoNoise;
  cfg.n_events = 3;
  cfg.temperatures = {-5, 10, 25};
  cfg.samples_per_event = 400;
  Dataset ds = datagen::generate_bridge_like(cfg, 4);
  for (int i = 0; i < ds.n_h; ++i) {
    const double c0 = spectral_centroid(ds.series[0].x_h.row(i));
    const double c1 = spectral_centroid(ds.series[1].x_h.row(i));
    const double c2 = spectral_centroid(ds.series[2].x_h.row(i));
    REQUIRE(c0 < c1);
    REQUIRE(c1 < c2);
  }
}

TEST_CASE("bridge deflection peak is linear in load and loads stay in range") {
  BridgeConfig cfg;
  cfg.snr_db = datagen::kNoNoise;
  cfg.n_events = 60;
  Dataset ds = datagen::generate_bridge_like(cfg, 11);
  Mat peak(cfg.n_events, 1);
  Eigen::VectorXd load(cfg.n_events);
  for (int e = 0; e < cfg.n_events; ++e) {
    peak(e, 0) = ds.series[e].x_l.maxCoeff();
    load(e) = ds.series[e].y(0);
    REQUIRE(load(e) >= 42100.0);
    REQUIRE(load(e) <= 53500.0);
  }
  REQUIRE(ols_r2(peak, load) > 0.99);
}

TEST_CASE("targets are recoverable by least squares on hand-crafted features") {
  // bearing: per-sensor temperature rate divided by speed is linear in loads
  Dataset bear = datagen::generate_bearing_like(noiseless_bearing(), 13);
  auto windows = datagen::window_dataset(bear);
  Mat feats(static_cast<Eigen::Index>(windows.size()), 2);
  Eigen::VectorXd fx(feats.rows()), fy(feats.rows());
  for (Eigen::Index k = 0; k < feats.rows(); ++k) {
    const SensorWindow& s = windows[k];
    const double speed = s.w(0, 0);
    feats(k, 0) = s.x_l.row(0).mean() / speed;
    feats(k, 1) = s.x_l.row(s.x_l.rows() - 1).mean() / speed;
    fx(k) = s.y(0);
    fy(k) = s.y(1);
  }
  REQUIRE(ols_r2(feats, fx) > 0.95);
  REQUIRE(ols_r2(feats, fy) > 0.95);

  // bridge: deflection peak is linear in the target load
  BridgeConfig bcfg;
  bcfg.snr_db = datagen::kNoNoise;
  Dataset bridge = datagen::generate_bridge_like(bcfg, 13);
  Mat bf(bcfg.n_events, 1);
  Eigen::VectorXd bl(bcfg.n_events);
  for (int e = 0; e < bcfg.n_events; ++e) {
    bf(e, 0) = bridge.series[e].x_l.maxCoeff();
    bl(e) = bridge.series[e].y(0);
  }
  REQUIRE(ols_r2(bf, bl) > 0.95);
}

TEST_CASE("noise injection hits the requested SNR") {
  std::mt19937_64 rng(17);
  Mat signal(1, 100000);
  for (Eigen::Index t = 0; t < signal.cols(); ++t)
    signal(0, t) = std::sin(0.01 * static_cast<double>(t));
  Mat noisy = datagen::add_noise(signal, 35.0, rng);
  const double sig_p = signal.array().square().mean();
  const double noise_p = (noisy - signal).array().square().mean();
  const double snr = 10.0 * std::log10(sig_p / noise_p);
  REQUIRE(snr > 34.5);
  REQUIRE(snr < 35.5);

  REQUIRE(datagen::add_noise(signal, datagen::kNoNoise, rng) == signal);
  REQUIRE_THROWS_AS(datagen::add_noise(Mat::Zero(2, 10), 35.0, rng),
                    ZeroPowerSignal);
}

TEST_CASE("low-frequency preprocessing recovers rates") {
  Eigen::VectorXd ramp(50);
  for (int t = 0; t < 50; ++t) ramp(t) = 0.25 * t;
  Eigen::VectorXd rate = datagen::preprocess_low_freq(ramp, 5, 10);
  REQUIRE((rate.array() - 0.25).abs().maxCoeff() < 1e-12);

  Eigen::VectorXd flat = Eigen::VectorXd::Constant(50, 3.0);
  REQUIRE(datagen::preprocess_low_freq(flat, 5, 10).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd tri(3);
  tri << 0, 3, 0;
  REQUIRE(datagen::moving_average(tri, 3)(0) == 1.0);

  REQUIRE_THROWS_AS(datagen::preprocess_low_freq(ramp.head(12), 5, 10),
                    SeriesTooShort);
}

TEST_CASE("bearing split is 40/10/50 per condition with no leakage") {
  Dataset ds = datagen::generate_bearing_like(BearingConfig{}, 21);
  auto windows = datagen::window_dataset(ds);
  REQUIRE(ds.series.size() == 55);
  REQUIRE(windows.size() == 55 * 41);

  datagen::Split sp =
      datagen::temporal_split(windows, DatasetKind::BearingLike, 21);
  datagen::Split sp2 =
      datagen::temporal_split(windows, DatasetKind::BearingLike, 21);
  REQUIRE(sp.train.size() == sp2.train.size());
  for (std::size_t k = 0; k < sp.train.size(); ++k) {
    REQUIRE(sp.train[k].condition == sp2.train[k].condition);
    REQUIRE(sp.train[k].window_index == sp2.train[k].window_index);
  }

  std::map<int, std::array<std::set<int>, 3>> per_cond;  // train/val/test ids
  for (const SensorWindow& w : sp.train) per_cond[w.condition][0].insert(w.window_index);
  for (const SensorWindow& w : sp.val) per_cond[w.condition][1].insert(w.window_index);
  for (const SensorWindow& w : sp.test) per_cond[w.condition][2].insert(w.window_index);
  REQUIRE(per_cond.size() == 55);

  const double n = 41.0;
  for (auto& [cond, sets] : per_cond) {
    auto& [tr, va, te] = sets;
    REQUIRE(std::abs(static_cast<double>(tr.size()) - 0.4 * n) <= 1.0);
    REQUIRE(std::abs(static_cast<double>(va.size()) - 0.1 * n) <= 1.0);
    REQUIRE(std::abs(static_cast<double>(te.size()) - 0.5 * n) <= 1.0);
    REQUIRE(tr.size() + va.size() + te.size() == 41);
    // pairwise disjoint, and every train/val index precedes every test index
    for (int i : tr) REQUIRE(va.count(i) == 0);
    for (int i : tr) REQUIRE(te.count(i) == 0);
    for (int i : va) REQUIRE(te.count(i) == 0);
    const int first_test = *te.begin();
    for (int i : tr) REQUIRE(i < first_test);
    for (int i : va) REQUIRE(i < first_test);
  }
}

TEST_CASE("bridge split sends even days to test only") {
  BridgeConfig cfg;
  cfg.n_events = 16;
  Dataset ds = datagen::generate_bridge_like(cfg, 23);
  auto windows = datagen::window_dataset(ds);
  const auto days = ds.day_of_condition();
  datagen::Split sp =
      datagen::temporal_split(windows, DatasetKind::BridgeLike, 23, days);
  REQUIRE(!sp.train.empty());
  REQUIRE(!sp.test.empty());
  for (const SensorWindow& w : sp.train) REQUIRE(days.at(w.condition) % 2 == 1);
  for (const SensorWindow& w : sp.val) REQUIRE(days.at(w.condition) % 2 == 1);
  for (const SensorWindow& w : sp.test) REQUIRE(days.at(w.condition) % 2 == 0);
}

TEST_CASE("groups with fewer than 5 windows are rejected") {
  BearingConfig cfg;
  cfg.loads = {{10, 10}};
  cfg.speeds = {10};
  cfg.samples_per_condition = 33;  // 4 windows
  Dataset ds = datagen::generate_bearing_like(cfg, 2);
  auto windows = datagen::window_dataset(ds);
  REQUIRE(windows.size() == 4);
  REQUIRE_THROWS_AS(
      datagen::temporal_split(windows, DatasetKind::BearingLike, 2),
      GroupTooSmall);
}

TEST_CASE("dataset disk round trip is exact") {
  namespace fs = std::filesystem;
  BearingConfig cfg;
  cfg.loads = {{10, 20}, {30, 10}};
  cfg.speeds = {20, 40};
  Dataset ds = datagen::generate_bearing_like(cfg, 31);
  const fs::path dir = fs::temp_directory_path() / "htgnn_dg_roundtrip";
  fs::remove_all(dir);
  datagen::save_dataset(ds, dir.string());
  Dataset back = datagen::load_dataset(dir.string());
  REQUIRE(back.kind == ds.kind);
  REQUIRE(back.window == ds.window);
  REQUIRE(back.series.size() == ds.series.size());
  for (std::size_t k = 0; k < ds.series.size(); ++k) {
    REQUIRE(back.series[k].x_l == ds.series[k].x_l);
    REQUIRE(back.series[k].x_h == ds.series[k].x_h);
    REQUIRE(back.series[k].w == ds.series[k].w);
    REQUIRE(back.series[k].y == ds.series[k].y);
    REQUIRE(back.series[k].day == ds.series[k].day);
  }
  fs::remove_all(dir);
}

TEST_CASE("empty condition grids are rejected") {
  BearingConfig cfg;
  cfg.loads.clear();
  REQUIRE_THROWS_AS(datagen::generate_bearing_like(cfg, 1), EmptyGrid);
  BridgeConfig bcfg;
  bcfg.n_events = 0;
  REQUIRE_THROWS_AS(datagen::generate_bridge_like(bcfg, 1), EmptyGrid);
}

TEST_CASE("generator configs reject unknown keys") {
  REQUIRE_THROWS_AS(BearingConfig::from_json({{"windw", 30}}), ConfigError);
  REQUIRE_THROWS_AS(BridgeConfig::from_json({{"n_event", 3}}), ConfigError);
  BearingConfig cfg;
  cfg.window = 24;
  REQUIRE(BearingConfig::from_json(cfg.to_json()).window == 24);
  BridgeConfig bcfg;
  bcfg.stride = 2;
  REQUIRE(BridgeConfig::from_json(bcfg.to_json()).stride == 2);
}
