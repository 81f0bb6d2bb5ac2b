#pragma once

// Optimization and evaluation: AdamW with decoupled weight decay, warm-up +
// reduce-on-plateau learning-rate schedule, early stopping with best-epoch
// parameter restoration, NRMSE/MAPE metrics, per-category evaluation, and a
// finite-difference gradient checker.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htgnn/errors.hpp"
#include "htgnn/model.hpp"
#include "htgnn/sample.hpp"

namespace htgnn::training {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nn::ParamVars;
using json = nlohmann::json;

struct TrainConfig {
  double lr0 = 5e-3;
  int max_epochs = 150;
  int patience = 20;
  int min_epochs = 50;
  double plateau_factor = 0.9;
  int plateau_patience = 10;
  int warmup_iters = 200;  // 200 bearing-like, 500 bridge-like
  double lr_min = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr_min > 0.0 && lr_min <= lr0))
      throw ConfigError("require 0 < lr_min <= lr0");
    if (patience >= max_epochs)
      throw ConfigError("patience must be below max_epochs");
    if (min_epochs < 1 || batch_size < 1 || warmup_iters < 0)
      throw ConfigError("invalid training config");
  }

  json to_json() const {
    return json{{"lr0", lr0},
                {"max_epochs", max_epochs},
                {"patience", patience},
                {"min_epochs", min_epochs},
                {"plateau_factor", plateau_factor},
                {"plateau_patience", plateau_patience},
                {"warmup_iters", warmup_iters},
                {"lr_min", lr_min},
                {"weight_decay", weight_decay},
                {"batch_size", batch_size},
                {"seed", seed}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    const json defaults = c.to_json();
    for (const auto& [key, val] : j.items())
      if (!defaults.contains(key))
        throw ConfigError("unknown train config key '" + key + "'");
    auto get_int = [&](const char* k, int& out) {
      if (j.contains(k)) out = j.at(k).get<int>();
    };
    auto get_dbl = [&](const char* k, double& out) {
      if (j.contains(k)) out = j.at(k).get<double>();
    };
    get_dbl("lr0", c.lr0);
    get_int("max_epochs", c.max_epochs);
    get_int("patience", c.patience);
    get_int("min_epochs", c.min_epochs);
    get_dbl("plateau_factor", c.plateau_factor);
    get_int("plateau_patience", c.plateau_patience);
    get_int("warmup_iters", c.warmup_iters);
    get_dbl("lr_min", c.lr_min);
    get_dbl("weight_decay", c.weight_decay);
    get_int("batch_size", c.batch_size);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  }
};

struct TrainState {
  std::vector<Mat> m1, m2;  // first/second moment accumulators
  long iteration = 0;
  int epoch = 0;
  int n_decays = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_since_improve = 0;
};

// Warm-up interpolates linearly from lr0 to the steady plateau value, then
// the plateau schedule applies: lr0 * factor^n_decays floored at lr_min.
inline double lr_at(long iteration, const TrainState& st,
                    const TrainConfig& cfg) {
  const double steady =
      std::max(cfg.lr_min, cfg.lr0 * std::pow(cfg.plateau_factor, st.n_decays));
  double lr = steady;
  if (iteration < cfg.warmup_iters && cfg.warmup_iters > 0) {
    const double frac =
        static_cast<double>(iteration) / static_cast<double>(cfg.warmup_iters);
    lr = cfg.lr0 + (steady - cfg.lr0) * frac;
  }
  return std::min(cfg.lr0, std::max(cfg.lr_min, lr));
}

// One decoupled-weight-decay adaptive-moment update over all parameters.
inline void adamw_step(nn::ParamStore& ps, const std::vector<Mat>& grads,
                       TrainState& st, const TrainConfig& cfg, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (st.m1.empty()) {
    for (int k = 0; k < ps.count(); ++k) {
      st.m1.push_back(Mat::Zero(ps.value(k).rows(), ps.value(k).cols()));
      st.m2.push_back(Mat::Zero(ps.value(k).rows(), ps.value(k).cols()));
    }
  }
  st.iteration += 1;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.iteration));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.iteration));
  for (int k = 0; k < ps.count(); ++k) {
    const Mat& g = grads[k];
    st.m1[k] = b1 * st.m1[k] + (1.0 - b1) * g;
    st.m2[k] = b2 * st.m2[k] + (1.0 - b2) * g.cwiseProduct(g);
    Mat update = (st.m1[k] / c1).array() /
                 ((st.m2[k] / c2).array().sqrt() + eps);
    ps.value(k) -= lr * (update + cfg.weight_decay * ps.value(k));
  }
}

struct History {
  std::vector<double> train_loss, val_loss, lr;
  int best_epoch = 0;
  int epochs_run = 0;
};

inline void save_history(const History& h, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "epoch,train_loss,val_loss,lr\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e + 1,
                  h.train_loss[e], h.val_loss[e], h.lr[e]);
    f << buf;
  }
}

// Mean MSE of the model over normalized samples, evaluation mode.
inline double evaluate_mse(const model::Model& m,
                           const std::vector<SensorWindow>& samples) {
  if (samples.empty()) throw EmptyCategory("no samples to evaluate");
  Tape tape;
  ParamVars pv = ParamVars::push_all(tape, m.params);
  double total = 0.0;
  for (const SensorWindow& s : samples) {
    Var pred = m.forward(tape, pv, s);
    total += (pred.value().col(0) - s.y).squaredNorm() /
             static_cast<double>(s.y.size());
  }
  return total / static_cast<double>(samples.size());
}

// Fits the normalizer on the training split, runs minibatch AdamW with the
// warm-up/plateau schedule and early stopping, and leaves the model holding
// the best-validation-epoch parameters.
inline History train(model::Model& m, const std::vector<SensorWindow>& train_set,
                     const std::vector<SensorWindow>& val_set,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw ConfigError("train and validation sets must be non-empty");

  m.norm = model::Normalizer::fit(train_set);
  std::vector<SensorWindow> tr, va;
  tr.reserve(train_set.size());
  va.reserve(val_set.size());
  for (const SensorWindow& s : train_set) tr.push_back(m.norm.apply(s));
  for (const SensorWindow& s : val_set) va.push_back(m.norm.apply(s));

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed + 0x9e3779b9ULL);
  TrainState st;
  History hist;
  std::vector<Mat> best_params;
  for (int k = 0; k < m.params.count(); ++k)
    best_params.push_back(m.params.value(k));

  std::vector<int> idx(tr.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<int>(k);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    st.epoch = epoch;
    std::shuffle(idx.begin(), idx.end(), order_rng);
    double epoch_loss = 0.0;
    double lr_used = lr_at(st.iteration, st, cfg);

    for (std::size_t b0 = 0; b0 < idx.size();
         b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 =
          std::min(idx.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      ParamVars pv = ParamVars::push_all(tape, m.params);
      Var total;
      for (std::size_t k = b0; k < b1; ++k) {
        const SensorWindow& s = tr[static_cast<std::size_t>(idx[k])];
        Var l = ad::mse_loss(m.forward(tape, pv, s, true, &dropout_rng), Mat(s.y));
        total = total.valid() ? ad::add(total, l) : l;
      }
      Var loss = ad::scale(total, 1.0 / static_cast<double>(b1 - b0));
      const double loss_val = loss.value()(0, 0);
      if (!std::isfinite(loss_val))
        throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch) +
                           ", iteration " + std::to_string(st.iteration) +
                           ", lr " + std::to_string(lr_used));
      ad::backward(loss);
      std::vector<Mat> grads;
      grads.reserve(static_cast<std::size_t>(m.params.count()));
      for (int k = 0; k < m.params.count(); ++k)
        grads.push_back(tape.grad_ref(pv.vars[k].idx));
      lr_used = lr_at(st.iteration, st, cfg);
      adamw_step(m.params, grads, st, cfg, lr_used);
      epoch_loss += loss_val * static_cast<double>(b1 - b0);
    }
    epoch_loss /= static_cast<double>(tr.size());

    const double val_loss = evaluate_mse(m, va);
    if (!std::isfinite(val_loss))
      throw DivergedLoss("non-finite validation loss at epoch " +
                         std::to_string(epoch));
    hist.train_loss.push_back(epoch_loss);
    hist.val_loss.push_back(val_loss);
    hist.lr.push_back(lr_used);

    if (val_loss < st.best_val) {
      st.best_val = val_loss;
      st.best_epoch = epoch;
      st.epochs_since_improve = 0;
      for (int k = 0; k < m.params.count(); ++k)
        best_params[static_cast<std::size_t>(k)] = m.params.value(k);
    } else {
      st.epochs_since_improve += 1;
      if (st.epochs_since_improve % cfg.plateau_patience == 0)
        st.n_decays += 1;
    }
    hist.epochs_run = epoch;
    if (epoch >= cfg.min_epochs && st.epochs_since_improve >= cfg.patience)
      break;
  }

  for (int k = 0; k < m.params.count(); ++k)
    m.params.value(k) = best_params[static_cast<std::size_t>(k)];
  hist.best_epoch = st.best_epoch;
  return hist;
}

// ---- metrics ---------------------------------------------------------------------

inline double nrmse(const Eigen::VectorXd& y_true,
                    const Eigen::VectorXd& y_pred) {
  if (y_true.size() < 2 || y_true.size() != y_pred.size())
    throw ShapeMismatch("nrmse needs two equally sized series of length >= 2");
  const double range = y_true.maxCoeff() - y_true.minCoeff();
  if (range <= 0.0) throw DegenerateRange("true values have zero range");
  const double rmse = std::sqrt((y_true - y_pred).squaredNorm() /
                                static_cast<double>(y_true.size()));
  return rmse / range;
}

inline double mape(const Eigen::VectorXd& y_true,
                   const Eigen::VectorXd& y_pred) {
  if (y_true.size() < 1 || y_true.size() != y_pred.size())
    throw ShapeMismatch("mape needs two equally sized non-empty series");
  double total = 0.0;
  for (Eigen::Index k = 0; k < y_true.size(); ++k) {
    if (std::abs(y_true(k)) <= 1e-8)
      throw NearZeroTruth("true value too close to zero for a percentage");
    total += std::abs(y_true(k) - y_pred(k)) / std::abs(y_true(k));
  }
  return 100.0 * total / static_cast<double>(y_true.size());
}

// ---- gradient verification ---------------------------------------------------------

// Central finite differences on a random 5% subset (at least 50 entries) of
// the parameters against the analytic gradient of the single-sample MSE.
inline double grad_check(const model::Model& m, const SensorWindow& sample,
                         double step, std::uint64_t seed = 0) {
  if (step <= 0.0) throw ConfigError("grad_check step must be positive");

  Tape tape;
  ParamVars pv = ParamVars::push_all(tape, m.params);
  Var loss = ad::mse_loss(m.forward(tape, pv, sample), Mat(sample.y));
  ad::backward(loss);

  struct Coord {
    int k;
    Eigen::Index i, j;
  };
  std::vector<Coord> coords;
  for (int k = 0; k < m.params.count(); ++k)
    for (Eigen::Index i = 0; i < m.params.value(k).rows(); ++i)
      for (Eigen::Index j = 0; j < m.params.value(k).cols(); ++j)
        coords.push_back({k, i, j});
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  const std::size_t n_check = std::min(
      coords.size(),
      std::max<std::size_t>(50, coords.size() / 20));

  // mutable copy for the finite-difference probes
  model::Model& probe = const_cast<model::Model&>(m);
  auto loss_value = [&]() {
    Tape t2;
    ParamVars pv2 = ParamVars::push_all(t2, probe.params);
    return ad::mse_loss(probe.forward(t2, pv2, sample), Mat(sample.y))
        .value()(0, 0);
  };

  double worst = 0.0;
  for (std::size_t c = 0; c < n_check; ++c) {
    const Coord& co = coords[c];
    double& p = probe.params.value(co.k)(co.i, co.j);
    const double orig = p;
    p = orig + step;
    const double up = loss_value();
    p = orig - step;
    const double dn = loss_value();
    p = orig;
    const double num = (up - dn) / (2.0 * step);
    const double ana = tape.grad_ref(pv.vars[co.k].idx)(co.i, co.j);
    const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
    worst = std::max(worst, std::abs(num - ana) / denom);
  }
  return worst;
}

// ---- per-category evaluation --------------------------------------------------------

inline std::string temperature_bin(double celsius) {
  if (celsius < 0.0) return "<0";
  if (celsius < 10.0) return "0-10";
  if (celsius < 20.0) return "10-20";
  return ">20";
}

// Category label of a condition id for a dataset condition table.
inline std::string category_label(const json& conditions,
                                  const std::string& key, int condition) {
  for (const json& row : conditions) {
    if (row.at("id").get<int>() != condition) continue;
    if (key == "condition") return "cond " + std::to_string(condition);
    if (key == "speed") {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", row.at("speed").get<double>());
      return buf;
    }
    if (key == "temperature")
      return temperature_bin(row.at("temperature").get<double>());
    throw ConfigError("unknown category key '" + key + "'");
  }
  throw EmptyCategory("condition " + std::to_string(condition) +
                      " missing from the condition table");
}

struct CategoryMetrics {
  double nrmse = 0.0;
  std::vector<double> mape_per_target;
  int n = 0;
};

struct Metrics {
  std::map<std::string, CategoryMetrics> per_category;
  CategoryMetrics average;

  json to_json() const {
    json cats = json::object();
    for (const auto& [label, cm] : per_category)
      cats[label] = {{"nrmse", cm.nrmse},
                     {"mape", cm.mape_per_target},
                     {"n", cm.n}};
    return json{{"categories", std::move(cats)},
                {"average",
                 {{"nrmse", average.nrmse},
                  {"mape", average.mape_per_target},
                  {"n", average.n}}}};
  }
};

// predict_fn maps a raw sample to a denormalized prediction; label_fn maps a
// condition id to its category label.
inline Metrics evaluate_by_category(
    const std::function<Eigen::VectorXd(const SensorWindow&)>& predict_fn,
    const std::vector<SensorWindow>& samples,
    const std::function<std::string(int)>& label_fn) {
  if (samples.empty()) throw EmptyCategory("no samples to evaluate");
  const int d_y = static_cast<int>(samples.front().y.size());

  std::map<std::string, std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>>
      by_cat;
  for (const SensorWindow& s : samples)
    by_cat[label_fn(s.condition)].emplace_back(s.y, predict_fn(s));

  // Constant-truth categories (e.g. per-condition grouping) have zero range;
  // they yield 0 for exact predictions and are degenerate otherwise.
  auto category_nrmse = [](const Eigen::VectorXd& yt, const Eigen::VectorXd& yp) {
    const double range = yt.maxCoeff() - yt.minCoeff();
    const double rmse =
        std::sqrt((yt - yp).squaredNorm() / static_cast<double>(yt.size()));
    if (range > 0.0) return rmse / range;
    if (rmse == 0.0) return 0.0;
    throw DegenerateRange("true values have zero range in a category");
  };

  Metrics out;
  out.average.mape_per_target.assign(d_y, 0.0);
  for (const auto& [label, pairs] : by_cat) {
    CategoryMetrics cm;
    cm.n = static_cast<int>(pairs.size());
    cm.mape_per_target.assign(d_y, 0.0);
    double nrmse_sum = 0.0;
    for (int t = 0; t < d_y; ++t) {
      Eigen::VectorXd yt(pairs.size()), yp(pairs.size());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        yt(static_cast<Eigen::Index>(k)) = pairs[k].first(t);
        yp(static_cast<Eigen::Index>(k)) = pairs[k].second(t);
      }
      nrmse_sum += category_nrmse(yt, yp);
      cm.mape_per_target[t] = mape(yt, yp);
    }
    cm.nrmse = nrmse_sum / d_y;
    out.average.nrmse += cm.nrmse;
    for (int t = 0; t < d_y; ++t)
      out.average.mape_per_target[t] += cm.mape_per_target[t];
    out.average.n += cm.n;
    out.per_category[label] = std::move(cm);
  }
  const double n_cats = static_cast<double>(out.per_category.size());
  out.average.nrmse /= n_cats;  // unweighted mean over categories
  for (double& v : out.average.mape_per_target) v /= n_cats;
  return out;
}

// Mean and 95% normal-approximation confidence half-width across runs.
inline std::pair<double, double> mean_ci(const std::vector<double>& values) {
  if (values.empty()) throw EmptyCategory("no runs to aggregate");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (n - 1.0);
  return {mean, 1.96 * std::sqrt(var / n)};
}

}  // namespace htgnn::training
