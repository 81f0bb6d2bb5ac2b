#pragma once

// Named parameter arrays with deterministic ordering, uniform fan-in
// initialization, and tape registration for a forward pass.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "htgnn/ad.hpp"
#include "htgnn/errors.hpp"

namespace htgnn::nn {

using ad::Mat;

class ParamStore {
 public:
  // fan_in <= 0 marks a bias: zero-initialized, untouched by init_uniform.
  Mat& add(const std::string& name, int rows, int cols, int fan_in) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.emplace_back(Mat::Zero(rows, cols));
    fan_in_.push_back(fan_in);
    return values_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Mat& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw MissingParams(name);
    return values_[it->second];
  }
  const Mat& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw MissingParams(name);
    return values_[it->second];
  }

  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw MissingParams(name);
    return it->second;
  }

  int count() const { return static_cast<int>(names_.size()); }
  const std::string& name(int k) const { return names_[k]; }
  Mat& value(int k) { return values_[k]; }
  const Mat& value(int k) const { return values_[k]; }

  std::size_t n_scalars() const {
    std::size_t n = 0;
    for (const Mat& m : values_) n += static_cast<std::size_t>(m.size());
    return n;
  }

  // Uniform in +-1/sqrt(fan_in) for weights; biases stay zero.
  void init_uniform(std::mt19937_64& rng) {
    for (int k = 0; k < count(); ++k) {
      if (fan_in_[k] <= 0) {
        values_[k].setZero();
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[k]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < values_[k].rows(); ++i)
        for (Eigen::Index j = 0; j < values_[k].cols(); ++j)
          values_[k](i, j) = dist(rng);
    }
  }

  void set_all_zero() {
    for (Mat& m : values_) m.setZero();
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::vector<int> fan_in_;
  std::map<std::string, int> index_;
};

// All parameters pushed onto a tape as leaves, addressable by name.
struct ParamVars {
  const ParamStore* store = nullptr;
  std::vector<ad::Var> vars;

  static ParamVars push_all(ad::Tape& tape, const ParamStore& ps) {
    ParamVars pv;
    pv.store = &ps;
    pv.vars.reserve(ps.count());
    for (int k = 0; k < ps.count(); ++k)
      pv.vars.push_back(ad::leaf(tape, ps.value(k)));
    return pv;
  }

  ad::Var operator[](const std::string& name) const {
    return vars[store->index_of(name)];
  }
};

}  // namespace htgnn::nn
